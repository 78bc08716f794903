"""Independent reference computations used to pin expected values.

Nothing here imports the package's numerical routines.
"""

import itertools
import math

import numpy as np


def lambert_fixed_point(x, iterations=2000):
    # damped w <- x exp(-w); converges for x > 0
    w = 0.5
    for _ in range(iterations):
        w = 0.5 * (w + x * math.exp(-w))
    return w


def ratio_by_bisection(upper, lower, beta, length_ratio=1.0):
    """Root in (1, inf) of exp(r/a)(U/a + 2b - U) = L + 2b - U."""
    def gap(a):
        return math.exp(length_ratio / a) * (upper / a + 2 * beta - upper) - (lower + 2 * beta - upper)

    lo, hi = 1.0, 2.0
    if gap(lo) == 0:
        return 1.0
    while gap(lo) * gap(hi) > 0:
        hi *= 2
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if gap(lo) * gap(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def simpson(f, a, b, n=20000):
    if n % 2:
        n += 1
    h = (b - a) / n
    total = f(a) + f(b)
    for i in range(1, n):
        total += (4 if i % 2 else 2) * f(a + i * h)
    return total * h / 3


def threshold_value(upper, beta, ratio, scale, w):
    return upper - beta + (upper / ratio - upper + 2 * beta) * np.exp(np.asarray(w) / (scale * ratio))


def pseudo_cost_grid(price_quad, price_lin, beta, x_prev, cap, threshold, w, step=1e-5):
    """Brute-force argmin of the pseudo-cost on a uniform grid (trapezoid integral of the threshold)."""
    xs = np.arange(0.0, cap + step / 2, step)
    xs[-1] = min(xs[-1], cap)
    phi = threshold(w + xs)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (phi[1:] + phi[:-1]) * np.diff(xs))])
    objective = price_quad * xs ** 2 + price_lin * xs + beta * np.abs(xs - x_prev) - integral
    return float(xs[int(np.argmin(objective))])


def enumerate_schedules(slopes, beta, job_length, step):
    """Exhaustive search over decisions on a grid for linear costs and unit caps."""
    levels = np.arange(0.0, 1.0 + step / 2, step)
    best = math.inf
    for combo in itertools.product(levels, repeat=len(slopes)):
        if sum(combo) < job_length - 1e-12:
            continue
        padded = (0.0, *combo, 0.0)
        cost = sum(s * x for s, x in zip(slopes, combo))
        cost += beta * sum(abs(b - a) for a, b in zip(padded, padded[1:]))
        best = min(best, cost)
    return best


def sorted_cdf(values, probs):
    """Linear-interpolated empirical quantiles from a sort."""
    ordered = sorted(values)
    n = len(ordered)
    out = []
    for p in probs:
        pos = p * (n - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, n - 1)
        out.append(ordered[lo] + (pos - lo) * (ordered[hi] - ordered[lo]))
    return out
