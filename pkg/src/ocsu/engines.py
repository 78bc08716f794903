"""Online policies: the threshold family, the learning-augmented combiner and baselines."""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .model import schedule_emissions
from .numerics import (
    eval_threshold,
    known_length_threshold,
    lacs_factors,
    max_length_threshold,
    min_length_threshold,
)

VARIANTS = (
    "RORO", "RORO_cmax", "RORO_cmin", "RORO_pred", "RORO_robust", "LACS",
    "OWT_pred", "SingleThreshold", "CarbonAgnostic", "CarbonScaler", "D_LACS",
)
MIXED_VARIANTS = ("RORO_robust", "LACS", "D_LACS")
WORK_QUANTUM = 1.0 / 64
_DONE_TOL = 1e-12


@dataclass(frozen=True)
class AlgorithmConfig:
    """Which policy to run and its knobs.

    The mixing factors may be given directly (``decision_factor`` is k,
    ``augmentation_factor`` is lambda) or through ``epsilon``/``gamma``, which
    are then mapped per instance.  Without either, both factors are 0.5.
    """

    variant: str
    epsilon: float = None
    gamma: float = None
    decision_factor: float = None
    augmentation_factor: float = None
    segments: int = 8
    forecast: tuple = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; known: {', '.join(VARIANTS)}")
        by_params = self.epsilon is not None or self.gamma is not None
        by_factors = self.decision_factor is not None or self.augmentation_factor is not None
        if by_params and by_factors:
            raise ValueError("give either epsilon/gamma or the mixing factors, not both")
        for name in ("decision_factor", "augmentation_factor"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        for name in ("epsilon", "gamma"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
        if self.segments < 1:
            raise ValueError("segments must be at least 1")
        if self.forecast is not None:
            object.__setattr__(self, "forecast", tuple(float(v) for v in self.forecast))

    def factors(self, spec):
        if self.epsilon is not None or self.gamma is not None:
            return lacs_factors(spec, self.epsilon or 0.0, self.gamma or 0.0)
        k = 0.5 if self.decision_factor is None else self.decision_factor
        lam = 0.5 if self.augmentation_factor is None else self.augmentation_factor
        return k, lam


@dataclass
class OnlineState:
    progress: float = 0.0
    previous: float = 0.0
    slot: int = 0
    in_compulsory: bool = False


def _first_nonnegative(slope, lo, hi):
    # smallest point of [lo, hi] where a non-decreasing slope turns non-negative
    if slope(lo) >= 0:
        return lo
    if slope(hi) < 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slope(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return hi


def pseudo_cost_minimize(g, phi, w, x_prev, cap):
    """Smallest minimiser over [0, cap] of g(x) + beta|x - x_prev| - integral of phi from w to w + x.

    The objective is convex with a kink at ``x_prev``; on each side of the
    kink its derivative is monotone, so each piece is searched by bisection
    on the derivative.
    """
    if cap <= 0:
        return 0.0
    beta = phi.spec.beta

    def slope(x, side):
        return g.derivative(x) + side * beta - eval_threshold(phi, w + x)

    kink = min(max(x_prev, 0.0), cap)
    if kink < cap and slope(kink, 1.0) < 0:
        return _first_nonnegative(lambda x: slope(x, 1.0), kink, cap)
    if kink > 0:
        return _first_nonnegative(lambda x: slope(x, -1.0), 0.0, kink)
    return 0.0


def compulsory_start(t, T, w, target, caps):
    """True when slot ``t`` (0-based) must start flat-out execution.

    Fires once the capacity left after this slot no longer covers the
    residual target with one slot of margin.
    """
    if w >= target - _DONE_TOL:
        return False
    caps = np.asarray(caps, dtype=float)
    if len(caps) != T:
        raise ValueError(f"expected {T} caps, got {len(caps)}")
    after = math.fsum(caps[t + 1:])
    return after < target - w + caps[t] - 1e-12


def discretize_decision(x, profile, segments):
    """Round the resources behind ``x`` to the nearest 1/segments (ties up)."""
    if x < 0:
        raise ValueError(f"negative work {x!r}")
    if x == 0:
        return 0.0
    s = profile.resources(x)
    rounded = math.floor(s * segments + 0.5) / segments
    return float(profile.work(rounded))


class _Replay:
    """Shared online loop: compulsory check, capping, progress bookkeeping."""

    def __init__(self, instance, target):
        self.instance = instance
        self.target = target
        self.caps = instance.rate_caps
        self.T = instance.horizon
        self.state = OnlineState()
        self.start = None
        self.decisions = np.zeros(self.T)

    def run(self, propose):
        c = self.instance.job_length
        state = self.state
        for t in range(self.T):
            state.slot = t
            remaining = c - state.progress
            if remaining <= _DONE_TOL:
                x = 0.0
            elif state.in_compulsory or compulsory_start(t, self.T, state.progress, self.target, self.caps):
                if not state.in_compulsory:
                    state.in_compulsory = True
                    self.start = t
                x = min(self.caps[t], remaining)
            else:
                cap = min(self.caps[t], remaining)
                x = min(max(propose(t, state, cap), 0.0), cap)
            self.decisions[t] = x
            state.progress += x
            state.previous = x
        return self.decisions, self.start


def _threshold_stream(instance, phi, target):
    costs = instance.costs

    def propose(t, state, cap):
        return pseudo_cost_minimize(costs[t], phi, state.progress, state.previous, cap)

    return _Replay(instance, target).run(propose)


def _blend(weight, first, second):
    # weight*first + (1 - weight)*second, exact at the endpoints and when the streams agree
    if weight == 1:
        return first.copy()
    if weight == 0:
        return second.copy()
    return second + weight * (first - second)


def _follow(instance, proposals, target):
    return _Replay(instance, target).run(lambda t, state, cap: proposals[t])


def _lacs_decisions(instance, config):
    spec = instance.spec
    k, lam = config.factors(spec)
    cmax_run, _ = _threshold_stream(instance, max_length_threshold(spec), spec.c_max)
    cmin_run, _ = _threshold_stream(instance, min_length_threshold(spec), spec.c_max)
    robust = _blend(k, cmax_run, cmin_run)
    if config.variant == "RORO_robust":
        return robust
    pred_phi = known_length_threshold(spec, instance.prediction, hold_terminal=True)
    pred_run, _ = _threshold_stream(instance, pred_phi, spec.c_max)
    return _blend(lam, pred_run, robust)


def _carbon_scaler_plan(instance, forecast):
    forecast = np.asarray(instance.intensities if forecast is None else forecast, dtype=float)
    if forecast.shape != instance.intensities.shape:
        raise ValueError("forecast length does not match the horizon")
    profile = instance.profile
    caps = instance.rate_caps
    energy = instance.energy_per_unit
    plan = np.zeros(instance.horizon)
    goal = instance.prediction

    def unit_price(t):
        step = min(WORK_QUANTUM, caps[t] - plan[t])
        if step <= 1e-15:
            return None
        extra = profile.resources(plan[t] + step) - profile.resources(plan[t])
        return forecast[t] * energy * extra / step, step

    heap = []
    for t in range(instance.horizon):
        priced = unit_price(t)
        if priced:
            heap.append((priced[0], t))
    heapq.heapify(heap)
    allocated = 0.0
    while heap and allocated < goal - _DONE_TOL:
        _, t = heapq.heappop(heap)
        step = min(WORK_QUANTUM, caps[t] - plan[t], goal - allocated)
        plan[t] += step
        allocated += step
        priced = unit_price(t)
        if priced:
            heapq.heappush(heap, (priced[0], t))
    return plan


def _decisions(instance, config):
    spec = instance.spec
    variant = config.variant
    if variant == "RORO":
        return _threshold_stream(instance, known_length_threshold(spec, instance.job_length),
                                 instance.job_length)
    if variant == "RORO_cmax":
        return _threshold_stream(instance, max_length_threshold(spec), spec.c_max)
    if variant == "RORO_cmin":
        return _threshold_stream(instance, min_length_threshold(spec), spec.c_max)
    if variant == "RORO_pred":
        phi = known_length_threshold(spec, instance.prediction, hold_terminal=True)
        return _threshold_stream(instance, phi, spec.c_max)
    if variant == "OWT_pred":
        blind = spec.replace(beta=0.0)
        phi = known_length_threshold(blind, instance.prediction, hold_terminal=True)
        return _threshold_stream(instance, phi, spec.c_max)
    if variant in ("RORO_robust", "LACS"):
        return _follow(instance, _lacs_decisions(instance, config), spec.c_max)
    if variant == "D_LACS":
        lacs, _ = _follow(instance, _lacs_decisions(instance, config), spec.c_max)
        rounded = [discretize_decision(x, instance.profile, config.segments) for x in lacs]
        return _follow(instance, rounded, spec.c_max)
    if variant == "SingleThreshold":
        level = math.sqrt(spec.upper * spec.lower)
        costs = instance.costs

        def propose(t, state, cap):
            full = instance.rate_caps[t]
            return cap if costs[t](full) / full < level else 0.0

        return _Replay(instance, spec.c_max).run(propose)
    if variant == "CarbonAgnostic":
        return _Replay(instance, spec.c_max).run(lambda t, state, cap: cap)
    if variant == "CarbonScaler":
        return _follow(instance, _carbon_scaler_plan(instance, config.forecast), spec.c_max)
    raise ValueError(f"unknown variant {variant!r}")


def run_online(instance, config):
    """Run one online policy over the instance and account its emissions."""
    if isinstance(config, str):
        config = AlgorithmConfig(config)
    decisions, start = _decisions(instance, config)
    return schedule_emissions(instance, decisions, start)
