"""Sweeps over trace windows, empirical competitive ratios, summaries and reports."""

import csv
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .engines import VARIANTS, AlgorithmConfig, run_online
from .generators import (
    SyntheticTraceSpec,
    XInstanceSpec,
    gen_synthetic_trace,
    gen_x_instance,
    inject_ci_error,
    load_trace_csv,
    sample_job,
)
from .model import CarbonTrace, get_profile, make_instance, slope_bounds
from .numerics import (
    ThresholdSpec,
    alpha,
    alpha_one,
    alpha_prime,
    consistency_robustness_bounds,
    factors_to_parameters,
)
from .offline import solve

log = logging.getLogger(__name__)

# grid axes in canonical order; the first five mirror the figure groupings
GRID_AXES = ("c_max", "beta", "ci_err", "rate", "profile", "pred_error", "lam", "k", "epsilon", "gamma")
BETA_SHARE_CAP = 0.4


def worker_count():
    raw = os.environ.get("OCSU_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"OCSU_THREADS must be an integer, got {raw!r}") from None


def _pool_map(fn, items):
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass(frozen=True)
class SweepSpec:
    """Parameter sweep over a carbon trace.

    Either ``trace`` (CSV path) or ``synthetic`` (SyntheticTraceSpec fields)
    gives the trace.  The LACS knobs sweep over the mixing factors ``lam``
    and ``k`` unless ``epsilon``/``gamma`` grids are given.
    """

    trace: str = None
    synthetic: dict = None
    arrival_stride: int = 20
    deadline: int = 24
    variants: tuple = VARIANTS
    c_min: float = 1.0
    c_max: tuple = (3.0,)
    beta: tuple = (20.0,)
    pred_error: tuple = (0.2,)
    lam: tuple = (0.5,)
    k: tuple = (0.5,)
    epsilon: tuple = None
    gamma: tuple = None
    ci_err: tuple = (0.0,)
    rate: tuple = (1.0,)
    profile: tuple = ("P1",)
    seeds: tuple = (0,)
    energy_per_unit: float = 1.0
    oracle: str = "auto"
    dp_levels: int = 128
    segments: int = 8
    max_arrivals: int = None

    def __post_init__(self):
        for name in ("variants", "c_max", "beta", "pred_error", "lam", "k", "epsilon", "gamma",
                     "ci_err", "rate", "profile", "seeds"):
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, (str, int, float)):
                value = (value,)
            value = tuple(value)
            if not value:
                raise ValueError(f"grid {name!r} is empty")
            object.__setattr__(self, name, value)
        if (self.trace is None) == (self.synthetic is None):
            raise ValueError("give exactly one of trace or synthetic")
        if (self.epsilon is None) != (self.gamma is None):
            raise ValueError("epsilon and gamma grids go together")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown variants {sorted(unknown)}")
        if self.oracle not in ("auto", "dp", "convex"):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        if self.arrival_stride < 1 or self.deadline < 1:
            raise ValueError("arrival_stride and deadline must be positive")
        for prof in self.profile:
            get_profile(prof)
        for c_max in self.c_max:
            for rate in self.rate:
                for prof in self.profile:
                    per_slot = float(get_profile(prof).work(rate))
                    if self.deadline < c_max / per_slot:
                        raise ValueError(
                            f"deadline {self.deadline} too short for c_max={c_max} at rate {rate} ({prof})")

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        out = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in out.items()}

    def load_trace(self):
        if self.trace is not None:
            return load_trace_csv(self.trace)
        return gen_synthetic_trace(SyntheticTraceSpec.from_dict(dict(self.synthetic)))

    def grid_points(self):
        lacs = ([("epsilon", self.epsilon), ("gamma", self.gamma)] if self.epsilon is not None
                else [("lam", self.lam), ("k", self.k)])
        axes = [("c_max", self.c_max), ("beta", self.beta), ("ci_err", self.ci_err), ("rate", self.rate),
                ("profile", self.profile), ("pred_error", self.pred_error)] + lacs
        names = [name for name, _ in axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(vals for _, vals in axes))]


def arrival_count(trace_length, stride, deadline):
    if trace_length < deadline:
        return 0
    return (trace_length - deadline) // stride + 1


@dataclass(frozen=True)
class RunRecord:
    instance_id: str
    arrival: int
    grid: dict
    variant: str
    total: float
    opt: float
    ratio: float
    compulsory_start: int
    feasible: bool
    seed: int
    oracle: str
    job_length: float = math.nan
    prediction: float = math.nan
    error: str = ""

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def _seed_for(seed, *parts):
    return int(np.random.SeedSequence([int(seed), *[int(p) for p in parts]]).generate_state(1)[0])


def build_sweep_instance(trace, spec, grid, arrival, seed):
    """Instance seen by every variant at (arrival, grid point, seed), plus the CI forecast."""
    start = arrival * spec.arrival_stride
    window = trace.window(start, spec.deadline)
    c, guess = sample_job(spec.c_min, grid["c_max"], grid["pred_error"], _seed_for(seed, arrival, 1))
    window_trace = CarbonTrace(trace.timestamps[start:start + spec.deadline], window)
    forecast = inject_ci_error(window_trace, grid["ci_err"], _seed_for(seed, arrival, 2)).intensities
    profile = get_profile(grid["profile"])
    low, high = slope_bounds(window, profile, profile.work(grid["rate"]), spec.energy_per_unit)
    beta = grid["beta"]
    upper = None
    if beta > 0 and beta >= BETA_SHARE_CAP * (high - low):
        # a flat window leaves no room for switching; loosen the known upper bound
        upper = low + beta / BETA_SHARE_CAP
    instance = make_instance(window, profile, c, guess, beta, spec.c_min, grid["c_max"], grid["rate"],
                             spec.energy_per_unit, upper=upper, require_slack=True)
    return instance, forecast


def _config_for(variant, grid, forecast, segments):
    if "epsilon" in grid:
        knobs = dict(epsilon=grid["epsilon"], gamma=grid["gamma"])
    else:
        knobs = dict(decision_factor=grid["k"], augmentation_factor=grid["lam"])
    return AlgorithmConfig(variant, segments=segments,
                           forecast=forecast if variant == "CarbonScaler" else None, **knobs)


def _run_task(task):
    trace, spec, grid, arrival, seed = task
    instance_id = f"a{arrival:05d}"
    records = []
    try:
        instance, forecast = build_sweep_instance(trace, spec, grid, arrival, seed)
        optimum = solve(instance, spec.oracle, spec.dp_levels)
    except (ValueError, ArithmeticError) as exc:
        return [RunRecord(instance_id, arrival, grid, v, math.nan, math.nan, math.nan, None, False,
                          seed, spec.oracle, error=str(exc)) for v in spec.variants]
    for variant in spec.variants:
        try:
            schedule = run_online(instance, _config_for(variant, grid, forecast, spec.segments))
        except (ValueError, ArithmeticError) as exc:
            records.append(RunRecord(instance_id, arrival, grid, variant, math.nan, optimum.objective,
                                     math.nan, None, False, seed, optimum.method,
                                     instance.job_length, instance.prediction, str(exc)))
            continue
        records.append(RunRecord(instance_id, arrival, grid, variant, schedule.total, optimum.objective,
                                 schedule.total / optimum.objective, schedule.compulsory_start,
                                 schedule.feasible, seed, optimum.method, instance.job_length,
                                 instance.prediction, "; ".join(schedule.violations)))
    return records


def run_sweep(spec):
    """One record per (arrival, grid point, variant, seed), in canonical order."""
    trace = spec.load_trace()
    count = arrival_count(len(trace), spec.arrival_stride, spec.deadline)
    if spec.max_arrivals is not None:
        count = min(count, spec.max_arrivals)
    if count == 0:
        raise ValueError(f"trace of {len(trace)} hours is shorter than the deadline {spec.deadline}")
    tasks = [(trace, spec, grid, arrival, seed)
             for grid in spec.grid_points() for seed in spec.seeds for arrival in range(count)]
    return [record for batch in _pool_map(_run_task, tasks) for record in batch]


def _grid_key(grid):
    return tuple((name, grid[name]) for name in GRID_AXES if name in grid)


@dataclass
class SummaryRow:
    grid: dict
    variant: str
    count: int
    infeasible: int
    mean_ratio: float
    worst_ratio: float
    mean_total: float
    savings: float
    cdf: list = field(default_factory=list)


def summarize(records, quantile_step=0.01):
    """Mean/worst ratio, CDF points and savings against CarbonAgnostic per (grid point, variant)."""
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for rec in records:
        groups.setdefault((_grid_key(rec.grid), rec.variant), []).append(rec)
    probs = np.linspace(0.0, 1.0, int(round(1 / quantile_step)) + 1)
    rows = []
    for (key, variant), recs in sorted(groups.items(), key=lambda kv: (_sort_key(kv[0][0]), kv[0][1])):
        good = [r for r in recs if r.feasible and math.isfinite(r.ratio)]
        ratios = np.array([r.ratio for r in good])
        if ratios.size:
            cdf = [(float(v), float(p)) for v, p in zip(np.quantile(ratios, probs), probs)]
            mean_ratio, worst = float(ratios.mean()), float(ratios.max())
            mean_total = float(np.mean([r.total for r in good]))
        else:
            cdf, mean_ratio, worst, mean_total = [], math.nan, math.nan, math.nan
        baseline = {(r.instance_id, r.seed): r.total for r in groups.get((key, "CarbonAgnostic"), [])
                    if r.feasible and math.isfinite(r.total)}
        matched = [(r.total, baseline[(r.instance_id, r.seed)]) for r in good
                   if (r.instance_id, r.seed) in baseline]
        savings = math.nan
        if matched:
            mine, base = np.array(matched).T
            savings = float(1.0 - mine.mean() / base.mean())
        rows.append(SummaryRow(dict(key), variant, len(recs), len(recs) - len(good),
                               mean_ratio, worst, mean_total, savings, cdf))
    return rows


def _sort_key(key):
    return tuple((name, (0, value) if isinstance(value, (int, float)) else (1, str(value)))
                 for name, value in key)


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".10g")
    return str(value)


SUMMARY_COLUMNS = ("variant", "count", "infeasible", "mean_ratio", "worst_ratio", "mean_total", "savings")


def _varying_axes(rows):
    axes = []
    for name in GRID_AXES:
        values = {_fmt(r.grid[name]) for r in rows if name in r.grid}
        if len(values) > 1:
            axes.append(name)
    return axes


def emit_report(summary, outdir, fmt="csv"):
    """Write the summary table and one CDF file per grid point; returns the written paths."""
    rows = list(summary)
    if not rows:
        raise ValueError("empty summary; nothing written")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {outdir}: {exc}") from exc
    grid_names = [name for name in GRID_AXES if name in rows[0].grid]
    varying = _varying_axes(rows)
    label_axes = varying or ["c_max"]
    group = "+".join(label_axes)

    written = []
    by_point = {}
    for row in rows:
        by_point.setdefault(_grid_key(row.grid), []).append(row)

    summary_path = outdir / f"summary.{fmt}"
    if fmt == "csv":
        table = [[*grid_names, *SUMMARY_COLUMNS]]
        for row in rows:
            table.append([_fmt(row.grid[n]) for n in grid_names]
                         + [row.variant, str(row.count), str(row.infeasible), _fmt(row.mean_ratio),
                            _fmt(row.worst_ratio), _fmt(row.mean_total), _fmt(row.savings)])
        _write_csv(summary_path, table)
    else:
        docs = [dict(grid={n: row.grid[n] for n in grid_names}, variant=row.variant, count=row.count,
                     infeasible=row.infeasible, mean_ratio=_json_num(row.mean_ratio),
                     worst_ratio=_json_num(row.worst_ratio), mean_total=_json_num(row.mean_total),
                     savings=_json_num(row.savings)) for row in rows]
        _write_json(summary_path, docs)
    written.append(summary_path)

    for key, point_rows in by_point.items():
        grid = dict(key)
        label = ",".join(f"{name}={_fmt(grid[name])}" for name in label_axes)
        path = outdir / f"{group}__{label}.{fmt}"
        variants = [r.variant for r in point_rows]
        probs = [p for _, p in point_rows[0].cdf] if point_rows[0].cdf else []
        if fmt == "csv":
            table = [["quantile", *variants]]
            for i, p in enumerate(probs):
                table.append([_fmt(p)] + [_fmt(r.cdf[i][0]) if r.cdf else "nan" for r in point_rows])
            _write_csv(path, table)
        else:
            _write_json(path, dict(grid={n: grid[n] for n in grid_names}, quantiles=probs,
                                   ratios={r.variant: [v for v, _ in r.cdf] for r in point_rows}))
        written.append(path)
    return written


def _json_num(value):
    return None if isinstance(value, float) and math.isnan(value) else value


def _write_csv(path, table):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\r\n").writerows(table)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _write_json(path, doc):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def save_records(records, path):
    _write_json(path, [_clean(r.to_dict()) for r in records])


def _clean(doc):
    return {k: (_json_num(v) if isinstance(v, float) else v) for k, v in doc.items()}


def load_records(path):
    with open(path, encoding="utf-8") as fh:
        docs = json.load(fh)
    out = []
    for doc in docs:
        doc = {k: (math.nan if v is None and k in ("total", "opt", "ratio", "job_length", "prediction")
                   else v) for k, v in doc.items()}
        out.append(RunRecord.from_dict(doc))
    return out


@dataclass(frozen=True)
class BoundCheck:
    claim: str
    spread: float
    beta_fraction: float
    c_max: float
    rate_divisor: float
    x: float
    job_length: float
    prediction: float
    ratio: float
    bound: float

    @property
    def passed(self):
        return self.ratio <= self.bound + 1e-6


def _bound_case(case):
    spread, beta_fraction, c_max, divisor, x_levels, m, k, lam = case
    upper, lower, beta = float(spread), 1.0, beta_fraction * spread
    spec = ThresholdSpec(upper, lower, beta, 1.0, float(c_max))
    epsilon, gamma = factors_to_parameters(spec, k, lam)
    consistency, robustness = consistency_robustness_bounds(spec, epsilon, gamma)
    a_one, a_two = alpha_one(spec), alpha_prime(spec)
    lacs = AlgorithmConfig("LACS", epsilon=epsilon, gamma=gamma)
    checks = []
    ends = (1.0, float(c_max))
    for x in np.linspace(lower, upper, x_levels):
        for c in ends:
            for guess in ends:
                xs = XInstanceSpec(x=float(x), m=m, upper=upper, lower=lower, beta=beta, c_max=float(c_max),
                                   job_length=c, prediction=guess, rate=c / divisor)
                instance = gen_x_instance(xs)
                opt = solve(instance, "convex").objective

                def add(claim, config, bound):
                    ratio = run_online(instance, config).total / opt
                    checks.append(BoundCheck(claim, upper, beta_fraction, float(c_max), divisor,
                                             float(x), c, guess, ratio, bound))

                if guess == c:
                    add("alpha_one:RORO_cmax", AlgorithmConfig("RORO_cmax"), a_one)
                    add("alpha_two:RORO_cmin", AlgorithmConfig("RORO_cmin"), a_two)
                    add("consistency:LACS", lacs, consistency)
                add("robustness:LACS", lacs, robustness)
    return checks


def bound_suite(spreads=(5, 10, 20), beta_fractions=(0.0, 0.05, 0.1), c_maxes=(2, 4), rate_divisors=(1,),
                x_levels=10, m=10, decision_factor=0.5, augmentation_factor=0.5):
    """Empirical ratios on staircase instances against each proven bound.

    Ratios use the convex oracle.  ``rate_divisors`` sets the per-slot work
    cap to c / divisor.
    """
    cases = [(s, b, c, d, x_levels, m, decision_factor, augmentation_factor)
             for s in spreads for b in beta_fractions for c in c_maxes for d in rate_divisors]
    return [check for batch in _pool_map(_bound_case, cases) for check in batch]


def ratio_table(spreads, beta_fraction, c_max):
    """(spread, alpha, alpha_two, alpha_one) rows for a fixed switching share."""
    rows = []
    for spread in spreads:
        spec = ThresholdSpec(float(spread), 1.0, beta_fraction * spread, 1.0, float(c_max))
        rows.append((float(spread), alpha(spec), alpha_prime(spec), alpha_one(spec)))
    return rows
