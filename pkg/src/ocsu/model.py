"""Traces, scaling profiles, cost functions, instances and schedules."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import ThresholdSpec

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CarbonTrace:
    """Hourly carbon intensity (gCO2eq/kWh) with UTC timestamps."""

    timestamps: tuple
    intensities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "intensities", _frozen_array(self.intensities))
        if len(self.timestamps) != len(self.intensities):
            raise ValueError("timestamps and intensities differ in length")
        if len(self.intensities) and not np.all(self.intensities > 0):
            bad = int(np.argmin(self.intensities > 0))
            raise ValueError(f"non-positive intensity at index {bad}")
        steps = {b - a for a, b in zip(self.timestamps, self.timestamps[1:])}
        if len(steps) > 1:
            raise ValueError("timestamps are not uniformly spaced")
        if steps and next(iter(steps)).total_seconds() <= 0:
            raise ValueError("timestamps are not strictly increasing")

    def __len__(self):
        return len(self.intensities)

    def window(self, start, length):
        if start < 0 or start + length > len(self):
            raise ValueError(f"window [{start}, {start + length}) outside trace of length {len(self)}")
        return self.intensities[start:start + length]


@dataclass(frozen=True)
class ScalingProfile:
    """Concave throughput map through its quadratic inverse ``s = a x^2 + b x``.

    ``quadratic`` is ``a`` and ``linear`` is ``b``; ``resources`` maps work to
    resource units and ``work`` maps back.
    """

    quadratic: float = 0.0
    linear: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not (self.quadratic >= 0 and self.linear > 0):
            raise ValueError(f"profile needs a >= 0 and b > 0, got a={self.quadratic}, b={self.linear}")

    def resources(self, work):
        return self.quadratic * work * work + self.linear * work

    def work(self, resources):
        # stable root of a x^2 + b x - s = 0
        b = self.linear
        return 2.0 * resources / (b + np.sqrt(b * b + 4.0 * self.quadratic * resources))

    def to_json(self):
        if self.name in PROFILES and PROFILES[self.name] == self:
            return self.name
        return {"quadratic": self.quadratic, "linear": self.linear}


PROFILES = {
    "P1": ScalingProfile(0.0, 1.0, "P1"),
    "P2": ScalingProfile(0.15, 1.0, "P2"),
    "P3": ScalingProfile(0.25, 1.0, "P3"),
    "P4": ScalingProfile(0.5, 1.0, "P4"),
    "P5": ScalingProfile(0.75, 1.0, "P5"),
    "P6": ScalingProfile(1.0, 1.0, "P6"),
}


def get_profile(value):
    if isinstance(value, ScalingProfile):
        return value
    if isinstance(value, str):
        try:
            return PROFILES[value]
        except KeyError:
            raise ValueError(f"unknown profile {value!r}; known: {sorted(PROFILES)}") from None
    if isinstance(value, dict):
        return ScalingProfile(float(value.get("quadratic", 0.0)), float(value.get("linear", 1.0)),
                              str(value.get("name", "")))
    raise TypeError(f"cannot build a profile from {value!r}")


@dataclass(frozen=True)
class CostFunction:
    intensity: float
    energy_per_unit: float = 1.0
    profile: ScalingProfile = PROFILES["P1"]

    def __call__(self, x):
        return eval_cost(self, x)

    @property
    def scale(self):
        return self.intensity * self.energy_per_unit

    def derivative(self, x):
        return self.scale * (2.0 * self.profile.quadratic * x + self.profile.linear)


def eval_cost(g, x):
    if x < 0:
        raise ValueError(f"negative work {x!r}")
    return g.scale * g.profile.resources(x)


@dataclass(frozen=True)
class ProblemInstance:
    """One job against a window of carbon intensities.

    Decisions are in work units per slot; ``resource_caps`` caps the
    resources per slot and ``rate_caps`` is the induced work cap.
    """

    intensities: np.ndarray
    profile: ScalingProfile
    spec: ThresholdSpec
    job_length: float
    prediction: float
    resource_caps: np.ndarray
    energy_per_unit: float = 1.0
    rate_caps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        intensities = _frozen_array(self.intensities)
        caps = np.broadcast_to(np.asarray(self.resource_caps, dtype=float), intensities.shape)
        object.__setattr__(self, "intensities", intensities)
        object.__setattr__(self, "resource_caps", _frozen_array(caps))
        object.__setattr__(self, "rate_caps", _frozen_array(self.profile.work(self.resource_caps)))
        if intensities.ndim != 1 or intensities.size == 0:
            raise ValueError("instance needs a non-empty 1-D intensity window")
        if not np.all(intensities > 0):
            raise ValueError("intensities must be positive")
        if not np.all(self.resource_caps > 0):
            raise ValueError("resource caps must be positive")
        if not self.energy_per_unit > 0:
            raise ValueError("energy_per_unit must be positive")
        s = self.spec
        tol = 1e-12 * s.c_max
        if not s.c_min - tol <= self.job_length <= s.c_max + tol:
            raise ValueError(f"job length {self.job_length} outside [{s.c_min}, {s.c_max}]")
        object.__setattr__(self, "prediction", float(min(max(self.prediction, s.c_min), s.c_max)))

    @property
    def horizon(self):
        return len(self.intensities)

    @property
    def costs(self):
        return [CostFunction(float(ci), self.energy_per_unit, self.profile) for ci in self.intensities]

    def cost_coefficients(self):
        """Per-slot (quadratic, linear) coefficients of the emission function."""
        scale = self.intensities * self.energy_per_unit
        return scale * self.profile.quadratic, scale * self.profile.linear

    def with_prediction(self, prediction):
        return _rebuild(self, prediction=prediction)

    def with_job_length(self, job_length):
        return _rebuild(self, job_length=job_length)

    def with_spec(self, spec):
        return _rebuild(self, spec=spec)

    def fingerprint(self):
        s = self.spec
        parts = [self.intensities.tobytes(), self.resource_caps.tobytes(),
                 repr((self.profile.quadratic, self.profile.linear, s.upper, s.lower, s.beta,
                       s.c_min, s.c_max, self.job_length, self.energy_per_unit)).encode()]
        return b"|".join(parts)


def _rebuild(instance, **changes):
    fields_ = dict(intensities=instance.intensities, profile=instance.profile, spec=instance.spec,
                   job_length=instance.job_length, prediction=instance.prediction,
                   resource_caps=instance.resource_caps, energy_per_unit=instance.energy_per_unit)
    fields_.update(changes)
    return ProblemInstance(**fields_)


def slope_bounds(intensities, profile, rate_caps, energy_per_unit=1.0):
    scale = np.asarray(intensities, dtype=float) * energy_per_unit
    if scale.size == 0:
        raise ValueError("empty instance")
    low = scale * profile.linear
    high = scale * (2.0 * profile.quadratic * np.asarray(rate_caps, dtype=float) + profile.linear)
    return float(low.min()), float(high.max())


def derivative_bounds(instance):
    """(L, U): smallest slope at zero and largest slope at the cap over all slots."""
    return slope_bounds(instance.intensities, instance.profile, instance.rate_caps,
                        instance.energy_per_unit)


def first_compulsory_slot(rate_caps, target):
    """Earliest slot at which a job that has made no progress must run flat out."""
    if target <= 0:
        return None
    caps = np.asarray(rate_caps, dtype=float)
    after = np.concatenate([np.cumsum(caps[::-1])[::-1][1:], [0.0]])
    hits = np.nonzero(after - caps < target - 1e-12)[0]
    return int(hits[0]) if hits.size else None


def make_instance(intensities, profile="P1", job_length=1.0, prediction=None, beta=0.0,
                  c_min=1.0, c_max=None, resource_caps=1.0, energy_per_unit=1.0,
                  upper=None, lower=None, require_slack=False):
    """Build an instance, deriving the slope bounds from the window unless overridden.

    A compulsory window that would open in the first slot is logged, or
    rejected when ``require_slack`` is set.
    """
    profile = get_profile(profile)
    intensities = np.asarray(intensities, dtype=float)
    caps = np.broadcast_to(np.asarray(resource_caps, dtype=float), intensities.shape)
    rate_caps = profile.work(caps)
    c_max = float(job_length if c_max is None else c_max)
    low, high = slope_bounds(intensities, profile, rate_caps, energy_per_unit)
    if upper is not None and upper < high * (1 - 1e-12):
        raise ValueError(f"upper={upper} below the largest slope {high}")
    if lower is not None and lower > low * (1 + 1e-12):
        raise ValueError(f"lower={lower} above the smallest slope {low}")
    spec = ThresholdSpec(float(high if upper is None else upper), float(low if lower is None else lower),
                         float(beta), float(c_min), c_max)
    start = first_compulsory_slot(rate_caps, c_max)
    if start is not None and start < 1:
        if require_slack:
            raise ValueError("no slack: a job of length c_max would have to run from the first slot")
        log.warning("no slack: a job of length c_max would have to run from the first slot")
    elif start is not None and start < len(intensities) / 2:
        log.warning("compulsory window opens at slot %d of %d", start, len(intensities))
    return ProblemInstance(intensities, profile, spec, float(job_length),
                           float(job_length if prediction is None else prediction), caps,
                           float(energy_per_unit))


@dataclass(frozen=True)
class Schedule:
    decisions: np.ndarray
    progress: np.ndarray
    execution_emissions: float
    switching_emissions: float
    total: float
    compulsory_start: int = None
    feasible: bool = True
    violations: tuple = ()


def schedule_emissions(instance, decisions, compulsory_start=None):
    """Account emissions of a decision sequence; infeasibility is flagged, not raised."""
    x = np.asarray(decisions, dtype=float)
    if x.shape != (instance.horizon,):
        raise ValueError(f"expected {instance.horizon} decisions, got shape {x.shape}")
    quad, lin = instance.cost_coefficients()
    execution = float(np.sum(quad * x * x + lin * x))
    padded = np.concatenate([[0.0], x, [0.0]])
    switching = float(instance.spec.beta * np.sum(np.abs(np.diff(padded))))
    progress = np.cumsum(x)

    problems = []
    caps = instance.rate_caps
    if np.any(x < -FEASIBILITY_TOL):
        problems.append(f"negative decision at slot {int(np.argmax(x < -FEASIBILITY_TOL))}")
    over = x > caps + FEASIBILITY_TOL * np.maximum(1.0, caps)
    if np.any(over):
        problems.append(f"rate cap exceeded at slot {int(np.argmax(over))}")
    done = float(progress[-1])
    if done < instance.job_length - FEASIBILITY_TOL:
        problems.append(f"job incomplete: {done:.12g} of {instance.job_length:.12g}")
    progress.setflags(write=False)
    x = x.copy()
    x.setflags(write=False)
    return Schedule(x, progress, execution, switching, execution + switching,
                    compulsory_start, not problems, tuple(problems))


def instance_to_dict(instance):
    s = instance.spec
    caps = instance.resource_caps
    uniform = bool(np.all(caps == caps[0]))
    return {
        "intensities": [float(v) for v in instance.intensities],
        "profile": instance.profile.to_json(),
        "energy_per_unit": instance.energy_per_unit,
        "job_length": instance.job_length,
        "prediction": instance.prediction,
        "beta": s.beta,
        "c_min": s.c_min,
        "c_max": s.c_max,
        "resource_caps": float(caps[0]) if uniform else [float(v) for v in caps],
        "upper": s.upper,
        "lower": s.lower,
    }


_INSTANCE_KEYS = {"intensities", "profile", "energy_per_unit", "job_length", "prediction", "beta",
                  "c_min", "c_max", "resource_caps", "upper", "lower"}


def instance_from_dict(doc):
    unknown = set(doc) - _INSTANCE_KEYS
    if unknown:
        raise ValueError(f"unknown instance fields: {sorted(unknown)}")
    for key in ("intensities", "job_length"):
        if key not in doc:
            raise ValueError(f"instance is missing {key!r}")
    return make_instance(
        doc["intensities"], doc.get("profile", "P1"), float(doc["job_length"]),
        doc.get("prediction"), float(doc.get("beta", 0.0)), float(doc.get("c_min", 1.0)),
        doc.get("c_max"), doc.get("resource_caps", 1.0), float(doc.get("energy_per_unit", 1.0)),
        doc.get("upper"), doc.get("lower"))


def save_instance(instance, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))

