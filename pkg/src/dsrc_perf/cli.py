"""Command-line front end: ``dsrc-perf {analyze,simulate,sweep,plot,report}``.

Exit codes: 0 success, 1 usage error, 2 model non-convergence (or an
infeasible/saturated operating point), 3 failed acceptance checks.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .dot11p_model import Infeasible, NoConvergence, contention_density_dot11p, solve_fixed_point
from .params import InvalidParams, ScenarioParams, load_scenario
from .report import IncomparableTable, compare_report
from .sim.engine import DEFAULT_DURATION, DEFAULT_REPS, DEFAULT_WARMUP, InvalidPolicy, run
from .spcdc_model import Saturated, solve_spcdc_fixed_point
from .plots import render_plots
from .sweep import SweepSpec, parse_policy, read_csv, run_sweep, write_csv, write_json

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("dsrc_perf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _policies(text: str | None, default: str) -> list[str]:
    labels = [p.strip() for p in (text or default).split(",") if p.strip()]
    for p in labels:
        parse_policy(p)
    return labels


def _clean(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _emit(obj, out: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def _scenario(args) -> ScenarioParams:
    return load_scenario(args.scenario) if args.scenario else ScenarioParams()


def cmd_analyze(args) -> int:
    params = _scenario(args)
    result = {}
    for label in _policies(args.policy, "dot11p,spcdc"):
        name, cw = parse_policy(label)
        p = params.with_(cw=cw) if cw else params
        if name == "dot11p":
            a = solve_fixed_point(p, tol=args.tol)
            d = a.as_dict()
            d["contention_density"] = contention_density_dot11p(a, p)
        else:
            d = solve_spcdc_fixed_point(p, tol=args.tol).as_dict()
        result[label] = _clean(d)
    _emit({"params": params.to_dict(), "analytic": result}, args.out, "analysis.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _scenario(args)
    result = {}
    for label in _policies(args.policy, "dot11p"):
        name, cw = parse_policy(label)
        p = params.with_(cw=cw) if cw else params
        res = run(p, name, args.duration, args.warmup, args.seed, args.reps, trace=args.trace, workers=args.workers)
        m = asdict(res.metrics)
        m.pop("per_rep")
        m["pdr_ci"] = list(m["pdr_ci"])
        result[label] = _clean(m)
        if args.trace and args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            for r, tr in enumerate(res.traces):
                tr.to_csv(args.out / f"trace_{label.replace('@', '_cw')}_rep{r}.csv")
    _emit({"params": params.to_dict(), "seed": args.seed, "reps": args.reps, "simulation": result}, args.out, "simulation.json")
    return EXIT_OK


def _write_report(rows, out: Path) -> bool:
    try:
        rep = compare_report(rows)
    except IncomparableTable as exc:
        log.error("report: %s", exc)
        raise
    (out / "report.txt").write_text(rep.text(), encoding="utf-8")
    sys.stdout.write(rep.text())
    return not rep.failed


def cmd_sweep(args) -> int:
    if args.out is None:
        raise UsageError("sweep needs --out DIR")
    overrides = dict(seed=args.seed, reps=args.reps, tol=args.tol, workers=args.workers,
                     duration=args.duration, warmup=args.warmup)
    if args.policy:
        overrides["policies"] = tuple(_policies(args.policy, ""))
    if args.sources:
        overrides["sources"] = tuple(s.strip() for s in args.sources.split(","))
    spec = SweepSpec.load(args.scenario, **overrides) if args.scenario else SweepSpec(**{k: v for k, v in overrides.items() if v is not None})
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    def progress(row):
        log.info("%s N=%d %s %s pdr=%.4f (%.1fs)", row.case, row.n_vehicles, row.policy, row.source, row.pdr, row.runtime_s)

    rows = run_sweep(spec, out / "results.csv", progress=progress, resume=args.resume)
    write_json(rows, out / "results.json")
    if rows:
        render_plots(rows, out / "plots")
        try:
            _write_report(rows, out)
        except IncomparableTable:
            pass
    return EXIT_OK


def _results_path(args) -> Path:
    if args.results:
        return args.results
    if args.out is None:
        raise UsageError("need --results FILE or --out DIR containing results.csv")
    return args.out / "results.csv"


def cmd_plot(args) -> int:
    rows = read_csv(_results_path(args))
    out = args.out if args.out is not None else _results_path(args).parent
    for p in render_plots(rows, out / "plots"):
        print(p)
    return EXIT_OK


def cmd_report(args) -> int:
    path = _results_path(args)
    rows = read_csv(path)
    out = args.out if args.out is not None else path.parent
    out.mkdir(parents=True, exist_ok=True)
    try:
        ok = _write_report(rows, out)
    except IncomparableTable:
        return EXIT_USAGE
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsrc-perf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, sim=False):
        p.add_argument("--scenario", type=Path, help="YAML or JSON key/value scenario file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--policy", help="comma list of dot11p, dot11p@<cw>, spcdc")
        p.add_argument("--tol", type=float, default=1e-10, help="fixed-point tolerance")
        if sim:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--reps", type=int, default=None)
            p.add_argument("--duration", type=float, default=None, help="simulated seconds per replication")
            p.add_argument("--warmup", type=float, default=None)
            p.add_argument("--workers", type=int, default=1)

    common(sub.add_parser("analyze", help="solve the analytic models for one scenario"))
    p = sub.add_parser("simulate", help="simulate one scenario")
    common(p, sim=True)
    p.add_argument("--trace", action="store_true", help="write per-packet trace CSVs to --out")
    p = sub.add_parser("sweep", help="run a grid of scenarios")
    common(p, sim=True)
    p.add_argument("--sources", help="comma list of analytic, simulation")
    p.add_argument("--resume", action="store_true", help="keep finished rows of an interrupted sweep in --out")
    for verb, text in (("plot", "render SVG charts from results.csv"), ("report", "check a results table against the acceptance thresholds")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("--results", type=Path, help="results CSV (default: OUT/results.csv)")
        p.add_argument("--out", type=Path)
    return parser


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "plot": cmd_plot, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help exits 0, bad usage exits 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "simulate":
        args.reps = DEFAULT_REPS if args.reps is None else args.reps
        args.duration = DEFAULT_DURATION if args.duration is None else args.duration
        args.warmup = DEFAULT_WARMUP if args.warmup is None else args.warmup
    try:
        return COMMANDS[args.verb](args)
    except (NoConvergence, Infeasible, Saturated) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (UsageError, InvalidParams, InvalidPolicy, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
