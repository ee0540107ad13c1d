"""Command-line harness.

Subcommands::

    tikhoprox run SPEC                  run one experiment
    tikhoprox compare SPEC SPEC [...]   run several on the same problem and overlay gaps
    tikhoprox check-schedule SCHEDULE   check growth hypotheses of a schedule
    tikhoprox rates TRACE.csv           fit empirical rates to columns of a trace

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error,
3 a hypothesis or rate check failed.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_loglog
from .experiment import load_spec, run_experiment
from .plotting import plot_gap_overlay, plot_run_report, plot_trajectory
from .prox_core import ParameterError
from .schedules import check_schedule, parse_schedule
from .solvers import TRACE_COLUMNS
from .specfile import SpecParseError
from .traceio import read_columns, write_columns, write_json

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3

DEFAULT_CLAIMS = ("gap:beta_k:-1", "subgrad_res:beta_k:-1")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _say(args, text):
    if not args.quiet:
        print(text)


def _write_result(result, out):
    """Write CSV, summary and figure for one experiment; return the CSV path."""
    name = result.spec.name
    if result.trace is not None:
        cols = result.trace.columns
        cols = {c: cols[c] for c in TRACE_COLUMNS}
        csv_path = out / f"{name}_trace.csv"
        write_columns(csv_path, cols)
        plot_run_report(out / f"{name}_report.svg", cols, title=name)
    else:
        cols = result.trajectory.columns()
        csv_path = out / f"{name}_trajectory.csv"
        write_columns(csv_path, cols)
        plot_trajectory(out / f"{name}_trajectory.svg", cols, title=name)
    write_json(out / f"{name}_summary.json", result.summary())
    return csv_path


def cmd_run(args):
    spec = load_spec(args.spec)
    result = run_experiment(spec)
    csv_path = _write_result(result, args.out)
    summ = result.summary()
    _say(args, f"wrote {csv_path}")
    _say(args, json.dumps({k: summ[k] for k in ("final_gap", "final_dist_xstar", "wall_time")}))
    return EXIT_OK


def _unique_names(names):
    seen = {}
    out = []
    for n in names:
        if n in seen:
            seen[n] += 1
            out.append(f"{n}_{seen[n]}")
        else:
            seen[n] = 0
            out.append(n)
    return out


def cmd_compare(args):
    if len(args.specs) < 2:
        raise UsageError("compare needs at least two spec files")
    specs = [load_spec(p) for p in args.specs]
    problems = {s.problem_key for s in specs}
    if len(problems) != 1:
        raise UsageError("compare needs all specs on the same problem with the same parameters")
    if any(s.kind != "algorithm" for s in specs):
        raise UsageError("compare supports iterative algorithms only")
    names = _unique_names([s.name for s in specs])
    for s, n in zip(specs, names):
        s.name = n
    results = [run_experiment(s) for s in specs]
    for r in results:
        _write_result(r, args.out)
    ks = np.unique(np.concatenate([r.trace.columns["k"] for r in results]))
    combined = {"k": ks}
    series = []
    for r, n in zip(results, names):
        col = np.full(ks.size, np.nan)
        idx = np.searchsorted(ks, r.trace.columns["k"])
        col[idx] = r.trace.columns["gap"]
        combined[f"{n}_gap"] = col
        series.append((n, r.trace.columns["k"], r.trace.columns["gap"]))
    write_columns(args.out / "compare.csv", combined)
    plot_gap_overlay(args.out / "compare.svg", series)
    _say(args, f"wrote {args.out / 'compare.csv'}")
    return EXIT_OK


def cmd_check_schedule(args):
    try:
        sched = parse_schedule(args.schedule)
        report = check_schedule(sched, c=args.c, mu=args.mu, horizon=args.horizon)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    _say(args, json.dumps(report.to_dict(), indent=2, default=float))
    return EXIT_OK if report.passed else EXIT_CHECK


def _parse_claim(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"claim must look like ycol:xcol:slope, got {text!r}")
    try:
        return parts[0], parts[1], float(parts[2])
    except ValueError:
        raise UsageError(f"claim slope is not a number: {parts[2]!r}") from None


def cmd_rates(args):
    claims = [_parse_claim(c) for c in (args.claim or DEFAULT_CLAIMS)]
    try:
        cols = read_columns(args.trace)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    missing = sorted({c for y, x, _ in claims for c in (y, x)} - set(cols))
    if missing:
        raise UsageError(f"{args.trace}: missing column(s): {', '.join(missing)}")
    n = len(next(iter(cols.values())))
    if n < 20:
        raise UsageError(f"{args.trace}: need at least 20 rows, got {n}")
    ok = True
    for ycol, xcol, slope in claims:
        rep = fit_loglog(cols[xcol], cols[ycol], tail_fraction=args.tail, claimed_slope=slope,
                         series=ycol, model=f"vs_{xcol}",
                         claimed=f"{ycol} = O({xcol}^{slope:g})")
        ok &= rep.verdict == "pass"
        _say(args, rep.to_json())
    return EXIT_OK if ok else EXIT_CHECK


def build_parser():
    p = _Parser(prog="tikhoprox", description="Tikhonov proximal algorithm benchmarks")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="run one experiment spec")
    r.add_argument("spec")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run specs on one problem and overlay their gaps")
    c.add_argument("specs", nargs="*")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("check-schedule", help="check growth hypotheses of a schedule")
    s.add_argument("schedule", help="e.g. polylog:m=3,q=3 or exppow:m=3,gamma=2,r=0.8 or table:FILE")
    s.add_argument("--c", type=float, default=3.0)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--horizon", type=float, default=1e12,
                   help="largest t and k examined (default 1e12)")
    s.set_defaults(func=cmd_check_schedule)

    t = sub.add_parser("rates", help="fit log-log rates on a trace CSV")
    t.add_argument("trace")
    t.add_argument("--claim", action="append",
                   help="ycol:xcol:slope, repeatable (default gap:beta_k:-1 and subgrad_res:beta_k:-1)")
    t.add_argument("--tail", type=float, default=0.5, help="tail fraction (default 0.5)")
    t.set_defaults(func=cmd_rates)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (UsageError, SpecParseError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure of an experiment
        print(f"tikhoprox: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
