"""Online carbon-aware resource scaling for jobs of unknown length."""

from .engines import VARIANTS, AlgorithmConfig, compulsory_start, discretize_decision, pseudo_cost_minimize, run_online
from .model import (
    PROFILES,
    CarbonTrace,
    CostFunction,
    ProblemInstance,
    ScalingProfile,
    Schedule,
    derivative_bounds,
    eval_cost,
    make_instance,
    schedule_emissions,
)
from .numerics import (
    CompetitiveRatios,
    ThresholdFn,
    ThresholdSpec,
    alpha,
    alpha_one,
    alpha_prime,
    consistency_robustness_bounds,
    eval_threshold,
    lacs_factors,
    lambert_w0,
    threshold_integral,
)
from .offline import OfflineSolution, solve, solve_convex, solve_dp

__version__ = "0.1.0"
