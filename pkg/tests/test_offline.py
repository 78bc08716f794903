import numpy as np
import pytest

from ocsu.engines import VARIANTS, run_online
from ocsu.model import make_instance
from ocsu.offline import InfeasibleInstance, solve, solve_convex, solve_dp
from oracles import enumerate_schedules


def linear(slopes, beta, c=1.0):
    slopes = [float(s) for s in slopes]
    return make_instance(slopes, "P1", c, beta=beta, upper=max(slopes), lower=min(slopes) / 2)


@pytest.mark.parametrize("slopes,beta,expected", [([1, 10], 0.0, 1.0), ([1, 10], 0.5, 2.0), ([3, 1, 3], 1.0, 3.0)])
def test_hand_instances(slopes, beta, expected):
    assert enumerate_schedules(slopes, beta, 1.0, 1 / 8) == pytest.approx(expected)
    inst = linear(slopes, beta)
    dp = solve_dp(inst, 16, 16)
    assert dp.objective == pytest.approx(expected, abs=1e-12)
    assert dp.method == "dp" and dp.grid == (16, 16)
    assert solve_convex(inst).objective == pytest.approx(expected, abs=1e-4)


def test_objective_matches_recomputed_schedule():
    rng = np.random.default_rng(0)
    inst = make_instance(rng.uniform(100, 300, 12), "P3", 2.0, beta=15.0, c_max=3.0)
    for sol in (solve_dp(inst, 32, 32), solve_convex(inst)):
        assert sol.schedule.feasible
        assert sol.objective == sol.schedule.total


def test_convex_not_above_fine_dp():
    rng = np.random.default_rng(1)
    for _ in range(3):
        inst = make_instance(rng.uniform(100, 400, 24), "P2", rng.uniform(1, 3), beta=20.0, c_max=3.0)
        fine = solve_dp(inst, 256, 256).objective
        assert solve_convex(inst).objective <= fine * (1 + 1e-7)


def test_kkt_without_switching():
    rng = np.random.default_rng(2)
    inst = make_instance(rng.uniform(100, 400, 24), "P4", 2.5, beta=0.0, c_max=3.0)
    sol = solve_convex(inst, 1e-10)
    x = sol.schedule.decisions
    quad, lin = inst.cost_coefficients()
    marginal = 2 * quad * x + lin
    interior = (x > 1e-6) & (x < inst.rate_caps - 1e-6)
    assert interior.sum() >= 2
    assert np.ptp(marginal[interior]) <= 1e-4 * marginal[interior].mean()
    # slots left idle are no cheaper at zero than the common marginal level
    level = marginal[interior].mean()
    assert np.all(lin[x <= 1e-6] >= level * (1 - 1e-4))


def test_dp_refinement_monotone():
    rng = np.random.default_rng(3)
    inst = make_instance(rng.uniform(100, 400, 10), "P1", 1.0, beta=10.0, c_max=1.0,
                         resource_caps=0.5)
    values = [solve_dp(inst, lv, lv).objective for lv in (16, 32, 64, 128)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_opt_lower_bounds_every_variant():
    rng = np.random.default_rng(4)
    for _ in range(5):
        inst = make_instance(rng.uniform(100, 400, 24), "P1", rng.uniform(1, 3), 2.0, 20.0, c_max=3.0)
        opt = solve_convex(inst).objective
        for variant in VARIANTS:
            assert run_online(inst, variant).total / opt >= 1 - 1e-6


def test_infeasible_reported():
    inst = make_instance([100.0, 200.0], "P1", 3.0, c_max=3.0)
    with pytest.raises(InfeasibleInstance):
        solve_dp(inst, 16, 16)
    with pytest.raises(InfeasibleInstance):
        solve_convex(inst)


def test_auto_picks_by_horizon():
    short = make_instance(np.full(24, 200.0), "P1", 1.0)
    long = make_instance(np.full(60, 200.0), "P1", 1.0)
    assert solve(short, levels=16).method == "dp"
    assert solve(long).method == "convex"
    with pytest.raises(ValueError):
        solve(short, "simplex")
