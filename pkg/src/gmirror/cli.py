"""Command-line front end: ``gmirror select | fd | simulate | plot-data``."""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

from . import io
from .errors import GaussianMirrorError
from .fd import bootstrap_fd
from .ols import run_gm_ols
from .postselect import PENALTY_RULES, LassoOptions, run_gm_lasso
from .sim import DESIGN_KINDS, METHODS, DesignSpec, TruthSpec, run_experiment


class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        _fail({"error": "usage", "message": message}, 2)


def _fail(payload: dict, code: int = 1):
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    raise SystemExit(code)


def _threads(value: str):
    if value == "auto":
        return value
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be a positive integer or 'auto'")
    return n


def _fraction(value: str) -> float:
    x = float(value)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"{value} is not in (0, 1)")
    return x


def _positive(value: str) -> float:
    x = float(value)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"{value} is not positive")
    return x


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="master seed for every random stream")
    p.add_argument("--threads", type=_threads, default=None,
                   help="worker threads (default: $GMIRROR_THREADS or the CPU count)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")


def _data_args(p: argparse.ArgumentParser):
    p.add_argument("--design", required=True, help="design CSV (optionally with a header row)")
    p.add_argument("--response", help="response CSV with one column")
    p.add_argument("--target", help="response column (name or 0-based index) inside the design file")
    p.add_argument("--no-standardize", action="store_true", help="use the design as given")
    p.add_argument("--method", choices=("ols", "lasso"), default="ols")
    p.add_argument("--q", type=_fraction, default=0.1, help="target FDR")
    p.add_argument("--sigma", type=_positive, help="known noise sd (estimated when omitted)")
    p.add_argument("--lambda", dest="penalty", type=_positive,
                   help="fixed Lasso penalty for ||y - Xb||^2 + lambda ||b||_1")
    p.add_argument("--penalty-rule", choices=PENALTY_RULES, default="cv")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--recenter", action="store_true",
                   help="use fitted means in the truncated CDFs of the post-Lasso statistic")


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(prog="gmirror", description="Gaussian-mirror variable selection with FDR control")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonErrorParser)

    sel = sub.add_parser("select", help="select features at a target FDR")
    _data_args(sel)
    _common(sel)

    fd = sub.add_parser("fd", help="bootstrap interval for false discoveries in the top k")
    _data_args(fd)
    fd.add_argument("--k", type=int, required=True)
    fd.add_argument("--bootstrap", type=int, default=200, help="bootstrap samples B (>= 50)")
    fd.add_argument("--alpha", type=_fraction, default=0.05)
    fd.add_argument("--base", choices=("ols", "lasso"), help="model giving the fitted values")
    fd.add_argument("--recenter-bootstrap", action="store_true",
                    help="shift bootstrap estimates to have mean equal to the point estimate")
    _common(fd)

    sim = sub.add_parser("simulate", help="replicated FDR/power experiment on synthetic data")
    sim.add_argument("--design-kind", choices=DESIGN_KINDS, default="ar1")
    sim.add_argument("--design-csv", help="fixed design for --design-kind csv")
    sim.add_argument("--param", type=float, default=0.0)
    sim.add_argument("--n", type=int, default=300)
    sim.add_argument("--p", type=int, default=1000)
    sim.add_argument("--p1", type=int, default=60)
    sim.add_argument("--amplitude", type=_positive, default=20.0,
                     help="signal sd is amplitude / sqrt(n)")
    sim.add_argument("--noise-sd", type=float, default=1.0)
    sim.add_argument("--replicates", type=int, default=100)
    sim.add_argument("--methods", default="gm-lasso,bh-ma,bh-ds",
                     help=f"comma-separated subset of {','.join(METHODS)}")
    sim.add_argument("--q", type=_fraction, default=0.1)
    sim.add_argument("--estimate-sigma", action="store_true",
                     help="estimate the noise sd instead of passing the true one")
    sim.add_argument("--penalty-rule", choices=PENALTY_RULES, default="cv")
    sim.add_argument("--recenter", action="store_true")
    _common(sim)

    plot = sub.add_parser("plot-data", help="long-format mean/sd table from experiment outputs")
    plot.add_argument("inputs", nargs="+", help="experiment tables (JSON or CSV) from simulate")
    plot.add_argument("--out", default="-")
    return parser


def _problem(args):
    return io.ingest_csv(args.design, args.response, args.target, not args.no_standardize)


def _options(args) -> LassoOptions:
    return LassoOptions(penalty=args.penalty, penalty_rule=args.penalty_rule, folds=args.folds,
                        sigma=args.sigma, recenter=args.recenter, threads=args.threads)


def _select(args):
    problem = _problem(args)
    if args.method == "ols":
        report = run_gm_ols(problem, args.q, args.seed, args.threads)
    else:
        report = run_gm_lasso(problem, args.q, args.seed, _options(args))
    if problem.feature_names:
        report.diagnostics["feature_names"] = list(problem.feature_names)
    report.diagnostics.update(n=problem.n, p=problem.p)
    return report


def _fd(args):
    problem = _problem(args)
    return bootstrap_fd(problem, args.method, args.k, args.bootstrap, args.alpha, args.seed,
                        recenter=args.recenter_bootstrap, options=_options(args),
                        threads=args.threads, base=args.base)


def _simulate(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    design = DesignSpec(args.design_kind, args.n, args.p, args.param, args.seed, args.design_csv)
    truth = TruthSpec(args.p1, args.amplitude / math.sqrt(args.n), args.noise_sd, args.seed)
    opts = LassoOptions(penalty_rule=args.penalty_rule, recenter=args.recenter)
    return run_experiment(design, truth, methods, args.replicates, args.q, args.seed, args.threads,
                          known_sigma=not args.estimate_sigma, lasso_options=opts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "plot-data":
                text = io.plot_data([io.read_table(p) for p in args.inputs], args.out)
            else:
                handler = {"select": _select, "fd": _fd, "simulate": _simulate}[args.command]
                text = io.emit_report(handler(args), args.out, args.format)
        for w in caught:
            sys.stderr.write(json.dumps({"warning": str(w.message)}, sort_keys=True) + "\n")
    except GaussianMirrorError as exc:
        _fail(exc.payload())
    except (ValueError, OSError) as exc:
        _fail({"error": type(exc).__name__, "message": str(exc)})
    if args.out == "-":
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
