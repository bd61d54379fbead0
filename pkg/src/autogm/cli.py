"""Command-line front-end.

Exit codes: 0 success, 1 invalid flags, 2 dataset errors, 3 search or
training failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .bayesopt import GpFitError
from .engine import AggregationStrategy, PRESET_NAMES
from .graph import DatasetError, generate_sbm, read_any, write_dataset
from .objective import BudgetConstraint
from .search import (SWEEP_BASES, SearchTrace, autogm_search, evaluate_preset, parameter_sweep,
                     random_search)
from .trainer import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAILURE = 0, 1, 2, 3

logger = logging.getLogger("autogm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _finite(text):
    value = float(text)
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text}")
    return value


def _positive(text):
    value = _finite(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="autogm", description="UnifiedGM models and budget-aware AutoGM search.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        if data:
            p.add_argument("--data", required=True, type=Path, help="dataset directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, help="output file (default: standard output)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--timing", choices=("wall", "ops"), default="wall",
                       help="wall-clock inference time, or a deterministic operation count")

    def budget_flags(p, required):
        p.add_argument("--mode", choices=("min-time", "max-acc"), required=required)
        p.add_argument("--bound", type=_finite, required=required,
                       help="minimum accuracy (min-time) or maximum seconds (max-acc)")
        p.add_argument("--lambda", dest="lam", type=_positive, default=1e-19)

    for name, help_text in (("search", "Bayesian-optimization search"),
                            ("random-search", "uniform random search baseline")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        budget_flags(p, required=True)
        p.add_argument("--budget", type=_positive_int, default=20, help="number of evaluations")
        p.add_argument("--wall-budget-s", type=_positive, help="stop starting new evaluations after this")

    p = sub.add_parser("eval-preset", help="train and score a named preset")
    common(p)
    budget_flags(p, required=False)
    p.add_argument("--name", required=True, choices=PRESET_NAMES)
    p.add_argument("--pixie-k", type=_positive_int, help="step count for the pixie preset")

    p = sub.add_parser("sweep", help="vary one parameter with the others fixed")
    common(p)
    budget_flags(p, required=False)
    p.add_argument("--param", required=True, choices=("d", "k", "w", "l", "a"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--base", choices=tuple(SWEEP_BASES), default="standard")

    p = sub.add_parser("gen-data", help="write a stochastic block model dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=_positive_int, default=400)
    p.add_argument("--communities", type=_positive_int, default=4)
    p.add_argument("--p-in", type=_finite, default=0.1)
    p.add_argument("--p-out", type=_finite, default=0.005)
    p.add_argument("--feature-dim", type=_positive_int, default=16)
    p.add_argument("--noise", type=_finite, default=0.5)

    p = sub.add_parser("export-dataset", help="convert a dataset directory to the TSV layout")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def parse_values(param: str, text: str) -> list:
    items = [t.strip() for t in text.split(",")]
    if not text.strip() or any(not t for t in items):
        raise UsageError(f"--values: empty entry in {text!r}")
    out = []
    for t in items:
        try:
            if param == "l":
                flag = t.lower()
                if flag not in ("true", "false", "1", "0", "t", "f"):
                    raise ValueError
                out.append(flag in ("true", "1", "t"))
            elif param == "a":
                out.append(AggregationStrategy.parse(int(t) if t.isdigit() else t))
            else:
                v = int(t)
                if (param == "w" and v != -1 and v < 1) or (param != "w" and v < 1):
                    raise ValueError
                out.append(v)
        except ValueError:
            raise UsageError(f"--values: invalid value {t!r} for parameter {param}") from None
    return out


def _constraint(args, required):
    if args.mode is None and args.bound is None:
        if required:
            raise UsageError("--mode and --bound are required")
        return BudgetConstraint("min-time", 0.0, args.lam)
    if args.mode is None or args.bound is None:
        raise UsageError("--mode and --bound must be given together")
    try:
        return BudgetConstraint(args.mode, args.bound, args.lam)
    except ValueError as exc:
        raise UsageError(f"--bound: {exc}") from None


def _check_output(args):
    if args.format == "csv" and args.command != "sweep":
        raise UsageError("--format csv is only available for sweep")


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)


def sweep_csv(trace: SearchTrace, param: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["param_value", "acc", "time_s"])
    for r in trace.records:
        value = getattr(r.params, param)
        value = value.name if param == "a" else value
        writer.writerow([value, repr(r.accuracy), repr(r.inference_seconds)])
    return buf.getvalue()


def _summary(trace: SearchTrace) -> str:
    r = trace.best
    status = "feasible" if r.feasible else "INFEASIBLE"
    return (f"best: iter={r.iteration} {r.params} acc={r.accuracy:.4f} "
            f"time_s={r.inference_seconds:.6g} f_gm={r.f_gm:.6g} ({status})")


def _run(args) -> int:
    if args.command == "gen-data":
        try:
            ds = generate_sbm(args.nodes, args.communities, args.p_in, args.p_out,
                              args.feature_dim, args.noise, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        write_dataset(ds, args.out)
        print(f"wrote {ds.node_count} nodes, {ds.graph.edge_count} edges to {args.out}")
        return EXIT_OK

    if args.command == "export-dataset":
        ds = read_any(args.data)
        write_dataset(ds, args.out)
        print(f"wrote {ds.node_count} nodes, {ds.graph.edge_count} edges to {args.out}")
        return EXIT_OK

    # every flag is checked before the dataset is touched
    _check_output(args)
    required = args.command in ("search", "random-search")
    constraint = _constraint(args, required)
    values = parse_values(args.param, args.values) if args.command == "sweep" else None
    if args.command == "eval-preset" and args.name == "pixie" and args.pixie_k is None:
        raise UsageError("--pixie-k is required for the pixie preset")

    dataset = read_any(args.data)
    config = TrainConfig()
    if args.command == "search":
        trace = autogm_search(dataset, constraint, args.budget, config, args.seed,
                              wall_budget_s=args.wall_budget_s, timing=args.timing)
    elif args.command == "random-search":
        trace = random_search(dataset, constraint, args.budget, config, args.seed,
                              wall_budget_s=args.wall_budget_s, timing=args.timing)
    elif args.command == "eval-preset":
        rec, model = evaluate_preset(dataset, args.name, config, args.seed, constraint=constraint,
                                     pixie_k=args.pixie_k, timing=args.timing)
        trace = SearchTrace(constraint, 1, args.seed, [rec],
                            rec.train_seconds + rec.inference_seconds, model)
    else:
        trace = parameter_sweep(dataset, args.param, values, SWEEP_BASES[args.base], config,
                                args.seed, constraint=constraint, timing=args.timing)

    if all(r.error is not None for r in trace.records):
        print(f"autogm: error: every evaluation failed: {trace.records[-1].error}", file=sys.stderr)
        return EXIT_FAILURE
    if args.format == "csv":
        text = sweep_csv(trace, args.param)
    else:
        text = trace.to_json(indent=2) + "\n"
    _emit(text, args.out)
    print(_summary(trace), file=sys.stdout if args.out is not None else sys.stderr)
    return EXIT_OK


def run(argv=None) -> int:
    """Parse ``argv`` and execute the subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except UsageError as exc:
        print(f"autogm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"autogm: dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GpFitError, ArithmeticError, RuntimeError) as exc:
        print(f"autogm: search failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main():
    sys.exit(run())
