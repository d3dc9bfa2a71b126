"""
Command-line driver.

Subcommands::

    sepdec gen     write a random problem and its metadata sidecar
    sepdec solve   run one solver, write trace.csv and summary.json
    sepdec bench   run several solvers on several problems, write metrics.csv
                   and profile.csv
    sepdec profile rebuild profile.csv from a metrics.csv

Exit codes: 0 success, 1 solver failure, 2 invalid input.
Settings are layered as defaults < JSON config file < flags; the worker
count falls back to ``SEPDEC_WORKERS`` and then to the CPU count.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (SOLVERS, build_profile, metric_matrix, read_metric_csv, run_benchmark,
                    run_solver, write_metric_csv)
from .generators import GeneratorSpec, generate
from .oracle import default_workers
from .problem import ProblemError, load_problem, save_problem, validate

logger = logging.getLogger("sepdec")

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2

SOLVE_DEFAULTS = {
    "solver": "switch",
    "t0": 1.0,
    "eps_t": 1e-2,
    "eps_g": 1e-3,
    "max_iter": 10000,
    "cf_cap": 1e6,
    "ca_mode": "adaptive",
    "t_fixed": None,
    "workers": None,
}
GEN_DEFAULTS = {"family": "basis_pursuit", "m": 50, "n": 128, "k": 14, "seed": 0, "gamma": 1.0}


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_solver_flags(p):
    # defaults are None so that unset flags do not override the config file
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--t0", type=float)
    p.add_argument("--eps-t", type=float)
    p.add_argument("--eps-g", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--cf-cap", type=float)
    p.add_argument("--ca-mode", choices=("fixed", "adaptive"))
    p.add_argument("--t-fixed", type=float)
    p.add_argument("--workers", type=_positive_int)
    p.add_argument("--config", help="JSON file with settings (keys as flag names)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sepdec", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random problem")
    g.add_argument("--family", choices=("basis_pursuit", "exp_l1", "toy"))
    g.add_argument("--m", type=_positive_int)
    g.add_argument("--n", type=_positive_int)
    g.add_argument("--k", type=_positive_int)
    g.add_argument("--seed", type=int)
    g.add_argument("--gamma", type=float)
    g.add_argument("--config")
    g.add_argument("--out", default="problem.json", help="problem file to write")

    s = sub.add_parser("solve", help="solve one problem")
    s.add_argument("problem")
    _add_solver_flags(s)
    s.add_argument("--out", default="run", help="output directory")

    b = sub.add_parser("bench", help="run solvers on a problem collection")
    b.add_argument("problems", nargs="+", help="problem files or directories")
    _add_solver_flags(b)
    b.add_argument("--solvers", default="switch,subgrad",
                   help="comma-separated solver names")
    b.add_argument("--metric", choices=("iterations", "time"), default="iterations")
    b.add_argument("--jobs", type=_positive_int, default=1)
    b.add_argument("--out", default="bench", help="output directory")

    pr = sub.add_parser("profile", help="profile from a metric matrix CSV")
    pr.add_argument("metrics")
    pr.add_argument("--out", default="profile.csv")
    return parser


def _normalize(d):
    return {k.replace("-", "_"): v for k, v in d.items()}


def resolve_settings(args, defaults):
    """Merge defaults, the optional config file and explicit flags."""
    settings = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as f:
                cfg = _normalize(json.load(f))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config {path}: {exc}")
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(cfg)
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    if "workers" in settings and settings["workers"] is None:
        try:
            settings["workers"] = default_workers()
        except ValueError:
            raise InputError(f"SEPDEC_WORKERS must be an integer, got {os.environ['SEPDEC_WORKERS']!r}")
    return settings


def _load(path):
    try:
        return load_problem(path)
    except FileNotFoundError:
        raise InputError(f"no such problem file: {path}")
    except (ProblemError, ValueError, KeyError) as exc:
        raise InputError(f"invalid problem {path}: {exc}")


def _solver_options(settings):
    try:
        opts = {k: v for k, v in settings.items() if k != "solver"}
        if opts["workers"] < 1:
            raise ValueError("workers must be positive")
        return opts
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc))


def cmd_gen(args):
    st = resolve_settings(args, GEN_DEFAULTS)
    spec = GeneratorSpec(family=st["family"], m=st["m"], n=st["n"], k=st["k"], seed=st["seed"],
                         gamma=st["gamma"])
    try:
        problem, meta = generate(spec)
    except ValueError as exc:
        raise InputError(str(exc))
    report = validate(problem)
    if not report.ok:
        raise InputError(str(report))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_problem(problem, out)
    meta_path = out.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    print(f"wrote {out} and {meta_path}")
    return EXIT_OK


def summarize(result, problem, solver, workers):
    x = np.asarray(result.x)
    return {
        "solver": solver,
        "status": result.status,
        "iterations": result.iterations,
        "optim": result.optim,
        "t": result.t,
        "residual": float(np.linalg.norm(problem.A @ x - problem.b)),
        "objective": float(problem.objective_value(x)),
        "oracle_calls": result.oracle_calls,
        "wall_time": result.elapsed,
        "workers": workers,
    }


def cmd_solve(args):
    st = resolve_settings(args, SOLVE_DEFAULTS)
    problem = _load(args.problem)
    opts = _solver_options(st)
    try:
        result = run_solver(problem, st["solver"], opts)
    except ValueError as exc:
        raise InputError(str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.trace.write_csv(out / "trace.csv")
    summary = summarize(result, problem, st["solver"], opts["workers"])
    summary["problem"] = str(args.problem)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"{st['solver']}: {result.status} after {result.iterations} iterations, "
          f"optim {result.optim:.3e}, t {result.t:.3e}")
    return EXIT_OK if result.solved else EXIT_FAILED


def _collect(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.glob("*.json") if not q.name.endswith(".meta.json"))
        elif p.exists():
            files.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    if not files:
        raise InputError("no problem files found")
    return files


def cmd_bench(args):
    st = resolve_settings(args, SOLVE_DEFAULTS)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    bad = [s for s in solvers if s not in SOLVERS]
    if bad or len(solvers) < 2:
        raise InputError(f"need at least two solvers from {SOLVERS}, got {args.solvers}")
    problems = [(f.stem, _load(f)) for f in _collect(args.problems)]
    records, profile = run_benchmark(problems, solvers, _solver_options(st), args.metric,
                                     args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metric_csv(out / "metrics.csv", records)
    profile.write_csv(out / "profile.csv")
    for s in solvers:
        print(f"{s}: solved {profile.solved_fraction(s):.2f}")
    if args.metric == "time":
        print("note: time profiles depend on the machine")
    return EXIT_OK


def cmd_profile(args):
    try:
        records = read_metric_csv(args.metrics)
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read {args.metrics}: {exc}")
    T, solvers, problems = metric_matrix(records)
    profile = build_profile(T, solvers, problems)
    profile.write_csv(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "bench": cmd_bench, "profile": cmd_profile}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
