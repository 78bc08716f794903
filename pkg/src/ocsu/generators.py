"""Inputs: trace files, synthetic traces, error injection, job sampling and x-instances."""

import csv
import json
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .model import CarbonTrace, make_instance

HEADER = ["timestamp", "carbon_intensity"]
HOUR = timedelta(hours=1)


class TraceFormatError(ValueError):
    pass


def _parse_timestamp(text):
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        return stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def format_timestamp(stamp):
    return stamp.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def load_trace_csv(path):
    """Read an hourly ``timestamp,carbon_intensity`` file, naming the offending line on error."""
    stamps, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise TraceFormatError(f"{path}: line 1: expected header {','.join(HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise TraceFormatError(f"{path}: line {line}: expected 2 fields, got {len(row)}")
            try:
                stamp = _parse_timestamp(row[0])
            except ValueError:
                raise TraceFormatError(f"{path}: line {line}: bad timestamp {row[0]!r}") from None
            try:
                value = float(row[1])
            except ValueError:
                raise TraceFormatError(f"{path}: line {line}: bad intensity {row[1]!r}") from None
            if not math.isfinite(value) or value <= 0:
                raise TraceFormatError(f"{path}: line {line}: intensity must be positive, got {row[1]!r}")
            if stamps:
                step = stamp - stamps[-1]
                if step <= timedelta(0):
                    raise TraceFormatError(f"{path}: line {line}: timestamp {row[0]!r} is not increasing")
                if step != HOUR:
                    raise TraceFormatError(f"{path}: line {line}: gap of {step} after previous row, expected 1 hour")
            stamps.append(stamp)
            values.append(value)
    if not values:
        raise TraceFormatError(f"{path}: no data rows")
    return CarbonTrace(stamps, values)


def save_trace_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(HEADER)
        for stamp, value in zip(trace.timestamps, trace.intensities):
            writer.writerow([format_timestamp(stamp), repr(float(value))])


def inject_ci_error(trace, err, seed):
    """Multiply each slot by 1 + u, u uniform on [-2 err, 2 err]; floor at 0.1% of the true value."""
    if err < 0:
        raise ValueError(f"err must be non-negative, got {err}")
    values = np.asarray(trace.intensities, dtype=float)
    if err == 0:
        return CarbonTrace(trace.timestamps, values.copy())
    rng = np.random.default_rng(seed)
    noisy = values * (1.0 + rng.uniform(-2.0 * err, 2.0 * err, size=values.shape))
    return CarbonTrace(trace.timestamps, np.maximum(noisy, 1e-3 * values))


def sample_job(c_min, c_max, pred_error, seed):
    """Draw (c, c_hat): c uniform on [c_min, c_max], c_hat uniform within +-pred_error*c, clamped."""
    if pred_error < 0:
        raise ValueError(f"pred_error must be non-negative, got {pred_error}")
    if not 0 < c_min <= c_max:
        raise ValueError(f"need 0 < c_min <= c_max, got {c_min}, {c_max}")
    rng = np.random.default_rng(seed)
    u, v = rng.random(2)
    c = c_min + u * (c_max - c_min)
    guess = c + pred_error * c * (2.0 * v - 1.0)
    return float(c), float(min(max(guess, c_min), c_max))


@dataclass(frozen=True)
class SyntheticTraceSpec:
    mean: float = 273.0
    diurnal_amplitude: float = 80.0
    noise_std: float = 15.0
    period: float = 24.0
    length: int = 2160
    seed: int = 0
    start: str = "2020-01-01T00:00:00Z"

    def __post_init__(self):
        if not self.mean - self.diurnal_amplitude - 4 * self.noise_std > 0:
            raise ValueError("mean - amplitude - 4*noise_std must be positive")
        if self.length < 1 or self.period <= 0 or self.noise_std < 0:
            raise ValueError("length and period must be positive, noise_std non-negative")

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    def to_dict(self):
        return asdict(self)


def gen_synthetic_trace(spec):
    rng = np.random.default_rng(spec.seed)
    hours = np.arange(spec.length)
    values = spec.mean + spec.diurnal_amplitude * np.sin(2 * np.pi * hours / spec.period)
    if spec.noise_std > 0:
        values = values + rng.normal(0.0, spec.noise_std, spec.length)
    values = np.maximum(values, 1e-3 * spec.mean)
    origin = _parse_timestamp(spec.start)
    return CarbonTrace([origin + i * HOUR for i in range(spec.length)], values)


@dataclass(frozen=True)
class XInstanceSpec:
    """Adversarial staircase: high blocks at ``upper`` separating single cheaper slots.

    The cheap slots step down by (upper - lower)/m until just above ``x``;
    then comes a block priced slightly above ``x`` and a closing block at
    ``upper``.  ``job_length`` defaults to ``c_max``, ``prediction`` to the
    job length and ``rate`` (work per slot) to the job length.
    """

    x: float
    m: int
    n: int = None
    upper: float = 10.0
    lower: float = 1.0
    beta: float = 0.0
    c_max: float = 1.0
    c_min: float = 1.0
    job_length: float = None
    prediction: float = None
    rate: float = None

    def __post_init__(self):
        if not self.lower <= self.x <= self.upper:
            raise ValueError(f"x={self.x} outside [{self.lower}, {self.upper}]")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.n is not None and self.n < 1:
            raise ValueError("n must be at least 1")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("rate must be positive")

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    def to_dict(self):
        return asdict(self)


def x_instance_prices(spec):
    """Per-slot price sequence of the staircase for ``spec``."""
    length = spec.c_max if spec.job_length is None else spec.job_length
    rate = length if spec.rate is None else spec.rate
    need = math.ceil(spec.c_max / rate - 1e-9)
    n = need + 2 if spec.n is None else spec.n
    if n * rate < spec.c_max - 1e-12:
        raise ValueError(f"block of {n} slots at rate {rate} cannot hold c_max={spec.c_max}")
    top = spec.upper
    if spec.x >= top:
        return [top] * max(n, need + 2), rate
    step = (top - spec.lower) / spec.m
    steps = math.ceil((top - spec.x) / step - 1e-9)
    prices = [top] * n
    for i in range(1, steps):
        prices.append(top - i * step)
        prices.extend([top] * n)
    prices.extend([min(spec.x + step / 10, top)] * n)
    prices.extend([top] * max(n, need + 2))
    return prices, rate


def gen_x_instance(spec):
    """Linear-cost instance (profile P1, unit energy) for the staircase."""
    prices, rate = x_instance_prices(spec)
    length = spec.c_max if spec.job_length is None else spec.job_length
    return make_instance(prices, "P1", length, spec.prediction, spec.beta, spec.c_min, spec.c_max,
                         rate, 1.0, spec.upper, spec.lower, require_slack=True)


def load_json(path, cls):
    with open(path, encoding="utf-8") as fh:
        return cls.from_dict(json.load(fh))
