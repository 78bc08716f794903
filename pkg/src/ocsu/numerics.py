"""Closed-form core: Lambert W, competitive ratios and threshold curves.

Everything here is a pure function of its arguments.  Ratios are computed
eagerly from a validated :class:`ThresholdSpec`, so a bad spec fails at
construction instead of leaking NaN into an online run.
"""

import math
from dataclasses import dataclass

INV_E = math.exp(-1.0)
_DOMAIN_SLACK = 1e-12


def lambert_w0(x):
    """Principal branch of the Lambert W function for real ``x >= -1/e``.

    Halley iteration started from ``log1p(x)`` on the positive axis and from
    the branch-point series on the negative axis.
    """
    x = float(x)
    if math.isnan(x):
        raise ValueError("lambert_w0 of NaN")
    if x < -INV_E - _DOMAIN_SLACK:
        raise ValueError(f"lambert_w0 undefined below -1/e, got {x!r}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    gap = 2.0 * (math.e * x + 1.0)
    if gap <= 0.0:
        return -1.0
    if x < -0.25:
        p = math.sqrt(gap)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
        # very close to the branch point the series is already exact to
        # machine precision and Halley would divide by ~0
        if p < 1e-6:
            return w
    else:
        w = math.log1p(x)
        if x > 3.0:
            # two-term asymptotic guess; log1p overshoots badly for large x
            lx = math.log(x)
            w = lx - math.log(lx)

    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= 1e-14 * max(1.0, abs(w)):
            break
    return w


def _sign(value):
    if value > 0:
        return 1.0
    if value < 0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class ThresholdSpec:
    """Known bounds of an instance.

    ``upper`` and ``lower`` bound the marginal emission of every slot
    (gCO2eq per unit of work), ``beta`` is the switching coefficient and
    ``c_min``/``c_max`` bound the job length.
    """

    upper: float
    lower: float
    beta: float = 0.0
    c_min: float = 1.0
    c_max: float = 1.0

    def __post_init__(self):
        for name in ("upper", "lower", "beta", "c_min", "c_max"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0 < self.lower <= self.upper:
            raise ValueError(f"need 0 < lower <= upper, got lower={self.lower}, upper={self.upper}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        # U = L with no switching cost is the degenerate single-price case
        if self.beta > 0 and not self.beta < (self.upper - self.lower) / 2:
            raise ValueError(
                f"beta={self.beta} must be below (upper - lower)/2 = {(self.upper - self.lower) / 2}"
            )
        if not 0 < self.c_min <= self.c_max:
            raise ValueError(f"need 0 < c_min <= c_max, got {self.c_min}, {self.c_max}")

    @property
    def spread(self):
        return self.upper / self.lower

    def replace(self, **changes):
        fields = dict(upper=self.upper, lower=self.lower, beta=self.beta,
                      c_min=self.c_min, c_max=self.c_max)
        fields.update(changes)
        return ThresholdSpec(**fields)


def _ratio_from_lambert(spec, length_ratio):
    # length_ratio = c_min / c_max; 1 gives the known-length ratio
    u, lo, b = spec.upper, spec.lower, spec.beta
    arg = length_ratio * (2 * b / u + lo / u - 1) * math.exp(length_ratio * (2 * b / u - 1))
    if arg < -INV_E - _DOMAIN_SLACK:
        raise ValueError(f"Lambert argument {arg!r} below -1/e for {spec}")
    arg = max(arg, -INV_E)
    denom = lambert_w0(arg) / length_ratio - 2 * b / u + 1
    if denom <= 0:
        raise ValueError(f"non-positive ratio denominator for {spec}")
    return 1.0 / denom


def alpha(spec):
    """Competitive ratio of the known-length threshold algorithm."""
    return _ratio_from_lambert(spec, 1.0)


def alpha_prime(spec):
    """Ratio of the conservative c_min-anchored threshold; equals alpha when c_min = c_max."""
    if spec.c_min == spec.c_max:
        return alpha(spec)
    return _ratio_from_lambert(spec, spec.c_min / spec.c_max)


def alpha_one(spec):
    """Ratio of the c_max-anchored threshold run on a job of unknown length."""
    return spec.upper / (alpha(spec) * spec.lower) + 2 * spec.beta / spec.lower


@dataclass(frozen=True)
class CompetitiveRatios:
    alpha: float
    alpha_prime: float
    alpha_one: float

    @property
    def alpha_two(self):
        return self.alpha_prime


def ratios(spec):
    return CompetitiveRatios(alpha(spec), alpha_prime(spec), alpha_one(spec))


@dataclass(frozen=True)
class ThresholdFn:
    """Exponential threshold ``U - beta + (U/ratio - U + 2 beta) exp(w / (scale ratio))``.

    ``hold_terminal`` extends the curve past ``domain_end`` at its terminal
    value instead of rejecting the argument.
    """

    kind: str
    spec: ThresholdSpec
    ratio: float
    scale: float
    domain_end: float
    hold_terminal: bool = False

    @property
    def coefficient(self):
        u = self.spec.upper
        return u / self.ratio - u + 2 * self.spec.beta

    @property
    def base(self):
        return self.spec.upper - self.spec.beta

    def __call__(self, w):
        return eval_threshold(self, w)


def known_length_threshold(spec, length, hold_terminal=False):
    return ThresholdFn("known_length", spec, alpha(spec), float(length), float(length), hold_terminal)


def max_length_threshold(spec):
    return ThresholdFn("max_length", spec, alpha(spec), spec.c_max, spec.c_max)


def min_length_threshold(spec):
    return ThresholdFn("min_length", spec, alpha_prime(spec), spec.c_max, spec.c_max)


def generic_threshold(spec, ratio, scale, domain_end):
    return ThresholdFn("generic", spec, float(ratio), float(scale), float(domain_end))


def _check_point(fn, w):
    tol = _DOMAIN_SLACK * max(1.0, fn.domain_end)
    if w < -tol:
        raise ValueError(f"threshold argument {w!r} is negative")
    if w > fn.domain_end + tol and not fn.hold_terminal:
        raise ValueError(f"threshold argument {w!r} beyond domain end {fn.domain_end!r}")
    return min(max(w, 0.0), fn.domain_end)


def eval_threshold(fn, w):
    w = _check_point(fn, float(w))
    return fn.base + fn.coefficient * math.exp(w / (fn.scale * fn.ratio))


def _antiderivative(fn, w):
    rate = fn.scale * fn.ratio
    return fn.base * w + rate * fn.coefficient * math.expm1(w / rate)


def threshold_integral(fn, a, b):
    """Exact integral of the threshold over ``[a, b]``."""
    a, b = float(a), float(b)
    if a > b:
        raise ValueError(f"empty or reversed interval [{a}, {b}]")
    if a == b:
        _check_point(fn, a)
        return 0.0
    end = fn.domain_end
    a_in = _check_point(fn, a)
    b_in = _check_point(fn, b)
    total = _antiderivative(fn, b_in) - _antiderivative(fn, a_in)
    if fn.hold_terminal and b > end:
        total += eval_threshold(fn, end) * (b - max(a, end))
    return total


def lacs_factors(spec, epsilon, gamma):
    """Map the trade-off parameters (epsilon, gamma) to the mixing factors (k, lambda)."""
    a = alpha(spec)
    a1 = alpha_one(spec)
    a2 = alpha_prime(spec)
    gap = abs(a1 - a2)
    tol = 1e-12 * max(1.0, gap)
    if not -tol <= epsilon <= gap + tol:
        raise ValueError(f"epsilon={epsilon} outside [0, {gap}]")
    epsilon = min(max(epsilon, 0.0), gap)
    k = 1.0 if gap == 0 else 1.0 - epsilon / gap

    room = a1 - _sign(a1 - a2) * epsilon - a
    gtol = 1e-12 * max(1.0, abs(room))
    if not -gtol <= gamma <= max(room, 0.0) + gtol:
        raise ValueError(f"gamma={gamma} outside [0, {room}]")
    gamma = min(max(gamma, 0.0), max(room, 0.0))
    lam = 1.0 if room <= 0 else 1.0 - gamma / room
    return min(max(k, 0.0), 1.0), min(max(lam, 0.0), 1.0)


def factors_to_parameters(spec, k, lam):
    """Inverse of :func:`lacs_factors`: the (epsilon, gamma) producing (k, lambda)."""
    if not (0 <= k <= 1 and 0 <= lam <= 1):
        raise ValueError(f"factors must lie in [0, 1], got k={k}, lambda={lam}")
    a = alpha(spec)
    a1 = alpha_one(spec)
    a2 = alpha_prime(spec)
    epsilon = (1 - k) * abs(a1 - a2)
    room = max(a1 - _sign(a1 - a2) * epsilon - a, 0.0)
    return epsilon, (1 - lam) * room


def predicted_worst_ratio(spec):
    """Worst ratio of the prediction-following stream under a wrong prediction."""
    a = alpha(spec)
    lo, u = spec.lower, spec.upper
    under = a * spec.c_min / spec.c_max + (spec.c_max - spec.c_min) / spec.c_max * (u / lo)
    over = u / (a * lo) + 2 * spec.beta / lo
    return max(under, over)


def consistency_robustness_bounds(spec, epsilon, gamma):
    lacs_factors(spec, epsilon, gamma)
    a = alpha(spec)
    a1 = alpha_one(spec)
    a2 = alpha_prime(spec)
    robust_ratio = a1 - _sign(a1 - a2) * epsilon
    room = robust_ratio - a
    worst = predicted_worst_ratio(spec)
    if room <= 0:
        return a + gamma, worst
    robustness = (1 - gamma / room) * worst + gamma * robust_ratio / room
    return a + gamma, robustness
