"""Command-line front end.

    steinfclt simulate|bound|verify|rate --config CFG [--out DIR] [--seed S]
                                         [--reps R] [--threads T] [--emit-svg]
    steinfclt graph simulate|bounds|verify --n N --p P [--reps R] [--seed S] [--out DIR]
    steinfclt runs  simulate|bounds|verify --n N --p P --rs 2,1 [...]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a verification (dominance / acceptance) check failed.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    DomainError,
    EnumerationTooLargeError,
    NumericalError,
    ShapeMismatchError,
    SteinFCLTError,
    UnsupportedModeError,
    ValidationError,
)
from .experiments import load_config, report_json, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

SUBCOMMAND_ACTIONS = {
    "simulate": ("simulate",),
    "bound": ("bound",),
    "verify": ("verify-covariance", "verify-regression", "verify-distance"),
    "rate": ("rate-study",),
}
DEFAULT_ACTION = {"simulate": "simulate", "bound": "bound", "verify": "verify-covariance", "rate": "rate-study"}


def _common(p: argparse.ArgumentParser, config: bool) -> None:
    if config:
        p.add_argument("--config", required=True, help="experiment JSON config")
        p.add_argument("--emit-svg", action="store_true", help="write an SVG chart (rate studies)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
    p.add_argument("--reps", type=int, default=None, help="Monte Carlo replications")
    p.add_argument("--threads", type=int, default=None, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steinfclt", description="Functional CLT simulation and bound toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_ACTIONS:
        _common(sub.add_parser(name, help=f"{name} from a JSON config"), config=True)
    for kind in ("graph", "runs"):
        g = sub.add_parser(kind, help=f"{kind} shortcuts without a config file")
        gs = g.add_subparsers(dest="shortcut", required=True)
        for act in ("simulate", "bounds", "verify"):
            p = gs.add_parser(act)
            p.add_argument("--n", type=int, required=True)
            p.add_argument("--p", type=float, required=True)
            if kind == "runs":
                p.add_argument("--rs", required=True, help="comma list, e.g. 2,1")
            _common(p, config=False)
    return parser


def _shortcut_config(args) -> dict:
    spec = {"n": args.n, "p": args.p}
    if args.command == "runs":
        spec["rs"] = args.rs
    action = {"simulate": "simulate", "bounds": "bound"}.get(args.shortcut)
    if action is None:
        if args.command == "graph":
            action = "verify-regression" if args.n <= 12 else "verify-covariance"
        else:
            action = "verify-covariance"
    return {"kind": args.command, "action": action, "spec": spec}


def _write(out_dir: Path, outcome, emit_svg: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "report.json"]
    written[0].write_text(report_json(outcome.report))
    action = outcome.report["action"]
    if outcome.csv is not None:
        name = "rate.csv" if action == "rate-study" else "path.csv"
        (out_dir / name).write_text(outcome.csv)
        written.append(out_dir / name)
    if emit_svg and outcome.svg is not None:
        (out_dir / "rate.svg").write_text(outcome.svg)
        written.append(out_dir / "rate.svg")
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in SUBCOMMAND_ACTIONS:
            cfg = load_config(args.config)
            allowed = SUBCOMMAND_ACTIONS[args.command]
            cfg.setdefault("action", DEFAULT_ACTION[args.command])
            if cfg["action"] not in allowed:
                raise ConfigError(f"action {cfg['action']!r} does not belong to subcommand {args.command!r} "
                                  f"(expected one of {', '.join(allowed)})")
            emit_svg = args.emit_svg
        else:
            cfg = _shortcut_config(args)
            emit_svg = False
        if args.seed is not None and not (0 <= args.seed < 2**64):
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        outcome = run_experiment(cfg, threads=args.threads, seed=args.seed, reps=args.reps)
    except (ConfigError, ValidationError, DomainError, ShapeMismatchError, UnsupportedModeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, EnumerationTooLargeError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except SteinFCLTError as e:  # pragma: no cover - every subclass is handled above
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    written = _write(Path(args.out), outcome, emit_svg)
    status = "PASS" if outcome.passed else "FAIL"
    print(f"{outcome.report['kind']} {outcome.report['action']}: {status}; wrote {', '.join(map(str, written))}")
    return EXIT_OK if outcome.passed else EXIT_VERIFY


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
