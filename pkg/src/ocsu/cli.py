"""Command-line front end.

Exit codes: 0 success, 1 validation or infeasibility findings, 2 usage error.
"""

import argparse
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .engines import VARIANTS, AlgorithmConfig, run_online
from .generators import (
    SyntheticTraceSpec,
    XInstanceSpec,
    gen_synthetic_trace,
    gen_x_instance,
    inject_ci_error,
    load_trace_csv,
    save_trace_csv,
)
from .harness import SweepSpec, bound_suite, emit_report, load_records, run_sweep, save_records, summarize
from .model import CarbonTrace, load_instance, make_instance, save_instance
from .offline import InfeasibleInstance, solve


class UsageError(Exception):
    pass


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None


def cmd_gen_trace(args):
    doc = _read_json(args.spec) if args.spec else {}
    for key, flag in (("mean", args.mean), ("diurnal_amplitude", args.amplitude), ("noise_std", args.noise),
                      ("period", args.period), ("length", args.length), ("seed", args.seed)):
        if flag is not None:
            doc[key] = flag
    spec = SyntheticTraceSpec.from_dict(doc)
    trace = gen_synthetic_trace(spec)
    save_trace_csv(trace, args.out)
    print(f"# seed={spec.seed}")
    print(f"wrote {len(trace)} hours to {args.out}")
    return 0


def cmd_gen_xinstance(args):
    if args.spec:
        spec = XInstanceSpec.from_dict(_read_json(args.spec))
    else:
        if args.x is None:
            raise UsageError("gen-xinstance needs --x or --spec")
        upper = args.upper if args.upper is not None else args.uoverl * args.lower
        beta = args.beta if args.beta is not None else args.beta_frac * upper
        spec = XInstanceSpec(x=args.x, m=args.m, n=args.n, upper=upper, lower=args.lower, beta=beta,
                             c_max=args.cmax, c_min=args.cmin, job_length=args.job_length,
                             prediction=args.prediction, rate=args.rate)
    instance = gen_x_instance(spec)
    save_instance(instance, args.out)
    print("# seed=none")
    print(f"wrote x-instance with {instance.horizon} slots to {args.out}")
    return 0


def _knobs(args):
    if args.epsilon is not None or args.gamma is not None:
        if args.lam is not None or args.k is not None:
            raise UsageError("use either --epsilon/--gamma or --lambda/--k")
        return dict(epsilon=args.epsilon or 0.0, gamma=args.gamma or 0.0)
    return dict(decision_factor=args.k, augmentation_factor=args.lam)


def _instance_from_args(args):
    if args.instance:
        if not Path(args.instance).exists():
            raise UsageError(f"no such file: {args.instance}")
        return load_instance(args.instance), None
    if not args.trace:
        raise UsageError("give --instance or --trace")
    if args.job_length is None:
        raise UsageError("--trace needs --job-length")
    if not Path(args.trace).exists():
        raise UsageError(f"no such file: {args.trace}")
    trace = load_trace_csv(args.trace)
    window = trace.window(args.start, args.deadline)
    instance = make_instance(window, args.profile, args.job_length, args.prediction, args.beta or 0.0,
                             args.cmin, args.cmax, args.rate, 1.0)
    stamps = trace.timestamps[args.start:args.start + args.deadline]
    return instance, CarbonTrace(stamps, window)


def cmd_run(args):
    instance, window = _instance_from_args(args)
    forecast = None
    if args.ci_err:
        if window is None:
            origin = datetime(2000, 1, 1, tzinfo=timezone.utc)
            window = CarbonTrace([origin + timedelta(hours=i) for i in range(instance.horizon)],
                                 instance.intensities)
        forecast = inject_ci_error(window, args.ci_err, args.seed).intensities
    knobs = _knobs(args)
    try:
        optimum = solve(instance, args.oracle, args.levels)
    except InfeasibleInstance as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"# seed={args.seed}")
    s = instance.spec
    print(f"# horizon={instance.horizon} job_length={_fmt(instance.job_length)} "
          f"prediction={_fmt(instance.prediction)} beta={_fmt(s.beta)} c_min={_fmt(s.c_min)} "
          f"c_max={_fmt(s.c_max)} upper={_fmt(s.upper)} lower={_fmt(s.lower)}")
    print(f"opt method={optimum.method} total={_fmt(optimum.objective)}")
    status = 0
    for variant in args.variant:
        config = AlgorithmConfig(variant, segments=args.segments,
                                 forecast=forecast if variant == "CarbonScaler" else None, **knobs)
        schedule = run_online(instance, config)
        print(f"variant={variant} total={_fmt(schedule.total)} execution={_fmt(schedule.execution_emissions)} "
              f"switching={_fmt(schedule.switching_emissions)} ratio={_fmt(schedule.total / optimum.objective)} "
              f"compulsory_start={_fmt(schedule.compulsory_start)} feasible={schedule.feasible}")
        print("slot,decision,progress")
        for t, (x, w) in enumerate(zip(schedule.decisions, schedule.progress)):
            print(f"{t},{_fmt(float(x))},{_fmt(float(w))}")
        if not schedule.feasible:
            print(f"infeasible: {'; '.join(schedule.violations)}", file=sys.stderr)
            status = 1
    return status


def cmd_opt(args):
    if not Path(args.instance).exists():
        raise UsageError(f"no such file: {args.instance}")
    instance = load_instance(args.instance)
    try:
        optimum = solve(instance, args.method, args.levels)
    except InfeasibleInstance as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("# seed=none")
    print(f"method={optimum.method} objective={_fmt(optimum.objective)} status={optimum.status}")
    print("slot,decision")
    for t, x in enumerate(optimum.schedule.decisions):
        print(f"{t},{_fmt(float(x))}")
    return 0 if optimum.converged and optimum.schedule.feasible else 1


def _report(records, out, fmt):
    paths = emit_report(summarize(records), out, fmt)
    for path in paths:
        print(f"wrote {path}")
    bad = [r for r in records if not r.feasible]
    for rec in bad:
        print(f"infeasible: {rec.instance_id} {rec.variant} {rec.error}", file=sys.stderr)
    return 1 if bad else 0


def cmd_sweep(args):
    spec = SweepSpec.from_dict(_read_json(args.spec))
    print(f"# seeds={','.join(str(s) for s in spec.seeds)}")
    records = run_sweep(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_records(records, out / "records.json")
    print(f"wrote {out / 'records.json'} ({len(records)} records)")
    return _report(records, out, args.format)


def cmd_report(args):
    if not Path(args.records).exists():
        raise UsageError(f"no such file: {args.records}")
    records = load_records(args.records)
    print(f"# seeds={','.join(sorted({str(r.seed) for r in records}))}")
    return _report(records, args.out, args.format)


def cmd_validate(args):
    checks = bound_suite(args.uoverl, args.beta_frac, args.cmax, args.rate_div, args.x_levels, args.m,
                         args.k, args.lam)
    print("# seed=none")
    status = 0
    for claim in dict.fromkeys(c.claim for c in checks):
        mine = [c for c in checks if c.claim == claim]
        failed = [c for c in mine if not c.passed]
        worst = max(mine, key=lambda c: c.ratio - c.bound)
        verdict = "PASS" if not failed else "FAIL"
        print(f"{verdict} {claim} checks={len(mine)} failures={len(failed)} "
              f"worst_ratio={_fmt(worst.ratio)} bound={_fmt(worst.bound)}")
        for c in failed:
            print(f"  violation spread={_fmt(c.spread)} beta_frac={_fmt(c.beta_fraction)} "
                  f"c_max={_fmt(c.c_max)} rate=c/{_fmt(c.rate_divisor)} x={_fmt(c.x)} "
                  f"c={_fmt(c.job_length)} prediction={_fmt(c.prediction)} "
                  f"ratio={_fmt(c.ratio)} bound={_fmt(c.bound)}")
        if failed:
            status = 1
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="ocsu", description="Carbon-aware online resource scaling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="write a synthetic hourly trace CSV")
    p.add_argument("--spec", help="SyntheticTraceSpec JSON")
    p.add_argument("--mean", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--length", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("gen-xinstance", help="write a staircase instance JSON")
    p.add_argument("--spec", help="XInstanceSpec JSON")
    p.add_argument("--x", type=float)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--n", type=int)
    p.add_argument("--uoverl", type=float, default=10.0)
    p.add_argument("--upper", type=float)
    p.add_argument("--lower", type=float, default=1.0)
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-frac", type=float, default=0.0)
    p.add_argument("--cmax", type=float, default=1.0)
    p.add_argument("--cmin", type=float, default=1.0)
    p.add_argument("--job-length", type=float)
    p.add_argument("--prediction", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_xinstance)

    p = sub.add_parser("run", help="run online variants on one instance")
    p.add_argument("--instance", help="instance JSON")
    p.add_argument("--trace", help="trace CSV (alternative to --instance)")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--deadline", type=int, default=24)
    p.add_argument("--job-length", type=float)
    p.add_argument("--prediction", type=float)
    p.add_argument("--profile", default="P1")
    p.add_argument("--rate", type=float, default=1.0, help="resource units per slot")
    p.add_argument("--beta", type=float)
    p.add_argument("--cmin", type=float, default=1.0)
    p.add_argument("--cmax", type=float)
    p.add_argument("--variant", action="append", choices=VARIANTS)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--segments", type=int, default=8)
    p.add_argument("--ci-err", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", choices=("auto", "dp", "convex"), default="auto")
    p.add_argument("--levels", type=int, default=128)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("opt", help="solve the offline optimum")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", choices=("auto", "dp", "convex"), default="auto")
    p.add_argument("--levels", type=int, default=128)
    p.set_defaults(func=cmd_opt)

    p = sub.add_parser("sweep", help="run a SweepSpec and write records and reports")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize saved records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check the proven bounds on staircase instances")
    p.add_argument("--uoverl", type=float, nargs="+", default=[5.0, 10.0, 20.0])
    p.add_argument("--beta-frac", type=float, nargs="+", default=[0.0, 0.05, 0.1])
    p.add_argument("--cmax", type=float, nargs="+", default=[2.0, 4.0])
    p.add_argument("--rate-div", type=float, nargs="+", default=[1.0],
                   help="per-slot work cap is c divided by each value")
    p.add_argument("--x-levels", type=int, default=10)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--k", type=float, default=0.5)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "variant", "unset") is None:
        args.variant = ["LACS"]
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
