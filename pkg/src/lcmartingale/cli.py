"""Command-line front end.

Exit codes: 0 success, 2 usage or parse error, 3 degenerate data, 4 solver
hard failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import parse_dist, simulate
from .martingale import StopRule, run_ensemble
from .npmle import ConvergenceError, DegenerateSampleError, FitOptions, fit, verify_kkt
from .pwl import EmpiricalMeasure
from .records import (
    DataFormatError,
    ensemble_document,
    fit_document,
    format_data,
    read_data,
    read_ensemble,
)
from .summary import DEFAULT_GRID_SIZE, default_grid, pointwise_band

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_SOLVER = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from None


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_config(output, config: dict):
    # CSV and data outputs carry their resolved config in a sidecar file.
    if output not in (None, "-"):
        Path(str(output) + ".config.json").write_text(
            json.dumps(config, sort_keys=True, indent=2) + "\n")


def _load_sample(path: str) -> np.ndarray:
    x = read_data(_read_text(path))
    if np.unique(x).size < 2:
        raise DegenerateSampleError(f"{path}: need at least two distinct values")
    return x


def _csv(header, rows) -> str:
    out = [",".join(header)]
    out.extend(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"


def cmd_simulate(args) -> int:
    try:
        spec = parse_dist(args.dist)
    except ValueError as err:
        raise UsageError(str(err)) from None
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    x = simulate(spec, args.n, args.seed)
    config = {"command": "simulate", "dist": str(spec), "n": args.n, "seed": args.seed,
              "library_version": __version__}
    _write(args.output, format_data(x))
    _write_config(args.output, config)
    return EXIT_OK


def cmd_fit(args) -> int:
    x = _load_sample(args.input)
    opts = FitOptions(tol=args.tol, max_iter=args.max_iter)
    measure = EmpiricalMeasure.from_sample(x)
    f = fit(measure, opts)
    report = verify_kkt(f, measure, tol=args.kkt_tol)
    config = {"command": "fit", "input": args.input, "tol": args.tol,
              "max_iter": args.max_iter, "kkt_tol": args.kkt_tol}
    _write(args.output, fit_document(f, report, x.size, config))
    return EXIT_OK


def _stop_rule(args, n: int) -> StopRule:
    if args.adaptive_window is not None and args.adaptive_eps is None:
        raise UsageError("--adaptive-window needs --adaptive-eps")
    if args.m is None:
        raise UsageError("--m is required (terminal sample size; the cap in adaptive mode)")
    if args.m < n:
        raise UsageError(f"--m {args.m} is below the sample size {n}")
    try:
        if args.adaptive_eps is not None:
            window = 5 if args.adaptive_window is None else args.adaptive_window
            return StopRule.adaptive(args.adaptive_eps, window, args.m)
        return StopRule.fixed(args.m)
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_posterior(args) -> int:
    if args.b < 1:
        raise UsageError("--b must be >= 1")
    if args.parallelism < 1:
        raise UsageError("--parallelism must be >= 1")
    x = _load_sample(args.input)
    rule = _stop_rule(args, x.size)
    opts = FitOptions(tol=args.tol, max_iter=args.max_iter)
    ens = run_ensemble(x, rule, args.b, args.seed, args.parallelism, opts)
    config = {"command": "posterior", "input": args.input, "b": args.b,
              "rule": rule.as_dict(), "seed": args.seed, "parallelism": args.parallelism,
              "tol": args.tol, "max_iter": args.max_iter}
    _write(args.output, ensemble_document(ens, x, config))
    return EXIT_OK


def _load_ensemble(path: str):
    return read_ensemble(_read_text(path))


def cmd_bands(args) -> int:
    if not 0.0 < args.alpha <= 1.0:
        raise UsageError("--alpha must lie in (0, 1]")
    if args.grid < 1:
        raise UsageError("--grid must be >= 1")
    ens = _load_ensemble(args.input)
    grid = default_grid(ens.support, args.grid)
    band = pointwise_band(ens, grid, args.alpha, args.scale)
    rows = [(float(g), float(lo), float(m), float(up)) for g, lo, m, up in band.rows()]
    config = {"command": "bands", "input": args.input, "alpha": args.alpha,
              "grid": args.grid, "scale": args.scale}
    _write(args.output, _csv(["grid", "lower", "mean", "upper"], rows))
    _write_config(args.output, config)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    ens = _load_ensemble(args.input)
    rows = []
    summary = []
    for sid, d in zip(ens.stream_ids, ens.diagnostics):
        rows.extend((sid, d.start_n + i + 1, float(v)) for i, v in enumerate(d.sup_diffs))
        summary.append((sid, d.stopped_at, float(d.terminal_diff), d.solver_failures))
    config = {"command": "diagnose", "input": args.input}
    _write(args.output, _csv(["chain", "step", "d"], rows))
    _write_config(args.output, config)
    if args.summary:
        _write(args.summary, _csv(["chain", "stopped_at", "terminal_d", "solver_failures"], summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lcmartingale",
                                description="Log-concave NPMLE and martingale posterior.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic sample, one value per line")
    s.add_argument("--dist", required=True,
                   help="normal(mu,sigma) | exponential(rate) | laplace(mu,b) | gamma(shape,scale)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", default="-")
    s.set_defaults(func=cmd_simulate)

    def solver_flags(q):
        q.add_argument("--tol", type=float, default=1e-8)
        q.add_argument("--max-iter", type=int, default=500)

    f = sub.add_parser("fit", help="NPMLE of a sample, with its optimality report")
    f.add_argument("--input", required=True)
    f.add_argument("--output", default="-")
    f.add_argument("--kkt-tol", type=float, default=1e-6)
    solver_flags(f)
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("posterior", help="run B predictive-resampling chains")
    q.add_argument("--input", required=True)
    q.add_argument("--output", default="-")
    q.add_argument("--b", type=int, default=50)
    q.add_argument("--m", type=int, help="terminal sample size (cap in adaptive mode)")
    q.add_argument("--adaptive-eps", type=float)
    q.add_argument("--adaptive-window", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--parallelism", type=int, default=1)
    solver_flags(q)
    q.set_defaults(func=cmd_posterior)

    b = sub.add_parser("bands", help="pointwise band table from an ensemble file")
    b.add_argument("--input", required=True)
    b.add_argument("--output", default="-")
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--grid", type=int, default=DEFAULT_GRID_SIZE)
    b.add_argument("--scale", choices=("density", "log"), default="density")
    b.set_defaults(func=cmd_bands)

    d = sub.add_parser("diagnose", help="per-chain sup-distance sequences")
    d.add_argument("--input", required=True)
    d.add_argument("--output", default="-")
    d.add_argument("--summary", help="optional per-chain summary table")
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DataFormatError) as err:
        print(f"lcmartingale {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateSampleError as err:
        print(f"lcmartingale {args.command}: degenerate data: {err}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ConvergenceError as err:
        print(f"lcmartingale {args.command}: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
