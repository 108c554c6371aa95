"""
Command-line entry point::

    penaldiff validate CONFIG
    penaldiff run CONFIG [--out DIR] [--n-jobs N] [--force]
    penaldiff sweep CONFIG --mu-grid 0.01 0.005 0.0025 [--theta 0.5]
    penaldiff track CONFIG [--out DIR]

``CONFIG`` is a JSON file or the name of a bundled configuration
(``tracking_default``, ``tracking_raw``). Exit status is 0 on success, 1 on
validation failure, divergence or a rejected step-size, 2 on unreadable
configurations.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..exceptions import ConfigParseError, DegenerateInput, InfeasibleKeyframe, StepSizeTooLarge
from .config import bundled_config, load_config
from .experiments import run_experiment, sweep_mu, tracking_scenario, validate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(source: str):
    path = Path(source)
    if not path.exists() and path.suffix == "" and "/" not in source:
        path = bundled_config(source)
    return load_config(path)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    report = validate(cfg)
    _print_json(report.to_dict())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_run(args) -> int:
    cfg = _load(args.config)
    report = validate(cfg)
    if not report.passed and not args.force:
        print("validation failed: " + "; ".join(report.failures), file=sys.stderr)
        return EXIT_FAIL
    res = run_experiment(cfg, out_dir=args.out, n_jobs=args.n_jobs)
    print(f"run directory: {res.run_dir}")
    _print_json(res.summary)
    if res.diverged:
        print("run diverged", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    try:
        res = sweep_mu(cfg, args.mu_grid, theta=args.theta, out_dir=args.out, n_jobs=args.n_jobs)
    except StepSizeTooLarge as exc:
        print(f"step-size rejected: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"run directory: {res.run_dir}")
    for row in res.table:
        print(json.dumps(row, sort_keys=True))
    try:
        fit = res.fit
        print(f"slope vs w_o(eta): {fit.slope:.4f}  slope vs w_star: {res.fit_w_star.slope:.4f}")
    except DegenerateInput as exc:
        print(f"fit rejected: {exc}", file=sys.stderr)
    return EXIT_FAIL if any(r["diverged"] for r in res.table) else EXIT_OK


def cmd_track(args) -> int:
    cfg = _load(args.config)
    try:
        res = tracking_scenario(cfg, out_dir=args.out)
    except InfeasibleKeyframe as exc:
        print(f"infeasible drift schedule: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"run directory: {res.run_dir}")
    _print_json(res.summary)
    return EXIT_FAIL if res.diverged else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penaldiff",
                                description="Penalized diffusion experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check matrices, step-size bound and feasibility")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    for name, func, helptext in (
        ("run", cmd_run, "run seeded replications and write metrics"),
        ("track", cmd_track, "run the drifting-constraint tracking experiment"),
        ("sweep", cmd_sweep, "steady-state MSD over a step-size grid"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--out", default=None, help="output directory (overrides config and env)")
        s.set_defaults(func=func)
        if name != "track":
            s.add_argument("--n-jobs", type=int, default=None)
        if name == "run":
            s.add_argument("--force", action="store_true", help="run even if validation fails")
        if name == "sweep":
            s.add_argument("--mu-grid", type=float, nargs="+", required=True)
            s.add_argument("--theta", type=float, default=None,
                           help="couple eta = mu**(-theta); default keeps the config's eta")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
