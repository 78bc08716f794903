"""Offline optimum: a discretised dynamic program and a convex-programming solver."""

from dataclasses import dataclass

import numpy as np

from .model import schedule_emissions


class InfeasibleInstance(ValueError):
    pass


@dataclass(frozen=True)
class OfflineSolution:
    schedule: object
    objective: float
    method: str
    grid: tuple = None
    converged: bool = True
    status: str = "optimal"


def _decision_grid(cap_units, levels):
    if cap_units <= 0:
        return np.zeros(1, dtype=np.int64)
    stride = max(1, -(-cap_units // levels))
    grid = np.arange(0, cap_units + 1, stride, dtype=np.int64)
    if grid[-1] != cap_units:
        grid = np.append(grid, cap_units)
    return grid


def solve_dp(instance, progress_levels=128, decision_levels=128):
    """Exact optimum over a uniform work grid of step c / progress_levels.

    State is (slot, progress bucket, previous decision); each slot's decision
    grid holds at most ``decision_levels + 1`` multiples of the step.
    """
    if progress_levels < 1 or decision_levels < 1:
        raise ValueError("grid levels must be positive")
    c = instance.job_length
    levels = int(progress_levels)
    step = c / levels
    caps = instance.rate_caps
    units = [int(np.floor(cap / step + 1e-9)) for cap in caps]
    if sum(units) < levels:
        raise InfeasibleInstance(
            f"capacity {float(np.sum(caps)):.6g} on the grid cannot cover job length {c:.6g}")

    quad, lin = instance.cost_coefficients()
    beta = instance.spec.beta
    T = instance.horizon
    grids = [_decision_grid(u, decision_levels) for u in units]
    values = [g * step for g in grids]
    buckets = np.arange(levels + 1)

    # value of the remaining problem, indexed by (progress, decision in the last slot)
    future = np.full((levels + 1, len(grids[-1])), np.inf)
    future[levels] = beta * values[-1]
    choices = [None] * T
    for t in range(T - 1, -1, -1):
        x = values[t]
        run_cost = quad[t] * x * x + lin[t] * x
        reach = np.minimum(levels, buckets[:, None] + grids[t][None, :])
        here = run_cost[None, :] + future[reach, np.arange(len(x))[None, :]]
        before = values[t - 1] if t > 0 else np.zeros(1)
        switch = beta * np.abs(x[None, :] - before[:, None])
        total = here[:, None, :] + switch[None, :, :]
        best = np.argmin(total, axis=2)
        future = np.take_along_axis(total, best[:, :, None], axis=2)[:, :, 0]
        choices[t] = best

    decisions = np.zeros(T)
    bucket, prev = 0, 0
    for t in range(T):
        pick = choices[t][bucket, prev]
        decisions[t] = values[t][pick]
        bucket = min(levels, bucket + int(grids[t][pick]))
        prev = pick
    if not np.isfinite(future[0, 0]):
        raise InfeasibleInstance("no grid schedule completes the job")
    schedule = schedule_emissions(instance, decisions)
    return OfflineSolution(schedule, schedule.total, "dp", (levels, int(decision_levels)))


def _repair(instance, x):
    caps = instance.rate_caps
    x = np.clip(x, 0.0, caps)
    deficit = instance.job_length - float(np.sum(x))
    if deficit > 0:
        slack = caps - x
        if slack.sum() < deficit:
            raise InfeasibleInstance("rate caps cannot cover the job length")
        x = x + slack * (deficit / slack.sum())
        x = np.minimum(x, caps)
    return x


def solve_convex(instance, tolerance=1e-9):
    """Continuous optimum of the quadratic program with L1 switching terms."""
    import cvxpy as cp

    caps = instance.rate_caps
    if float(np.sum(caps)) < instance.job_length - 1e-12:
        raise InfeasibleInstance("rate caps cannot cover the job length")
    quad, lin = instance.cost_coefficients()
    T = instance.horizon
    x = cp.Variable(T)
    padded = cp.hstack([np.zeros(1), x, np.zeros(1)])
    objective = lin @ x + instance.spec.beta * cp.norm1(cp.diff(padded))
    if np.any(quad > 0):
        objective = objective + cp.sum(cp.multiply(quad, cp.square(x)))
    problem = cp.Problem(cp.Minimize(objective), [x >= 0, x <= caps, cp.sum(x) >= instance.job_length])

    status = "not solved"
    for solver, opts in (("CLARABEL", dict(tol_gap_abs=tolerance, tol_gap_rel=tolerance,
                                           tol_feas=tolerance, max_iter=500)),
                         ("SCS", dict(eps=tolerance, max_iters=100000))):
        try:
            problem.solve(solver=solver, **opts)
        except cp.error.SolverError:
            continue
        status = problem.status
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and x.value is not None:
            break
    if x.value is None:
        raise InfeasibleInstance(f"convex solve failed with status {status}")
    schedule = schedule_emissions(instance, _repair(instance, np.asarray(x.value, dtype=float)))
    return OfflineSolution(schedule, schedule.total, "convex", None, status == cp.OPTIMAL, status)


def solve(instance, method="auto", levels=128):
    if method == "auto":
        method = "dp" if instance.horizon <= 48 else "convex"
    if method == "dp":
        return solve_dp(instance, levels, levels)
    if method == "convex":
        return solve_convex(instance)
    raise ValueError(f"unknown oracle {method!r}")
