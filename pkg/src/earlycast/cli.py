"""Command-line interface.

Subcommands: generate, train, evaluate, report, all. Exit codes: 0 success,
1 usage error, 2 data error, 3 training failure (at least one model
diverged; the others still complete).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments
from .config import default_out_dir, load_config
from .errors import DataFormatError, EarlycastError, KinematicsError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="earlycast",
                     description="Early classification of catching trials "
                                 "with predictive sequential classification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("generate", "write a synthetic trial dataset"),
            ("train", "train roster models for every repetition"),
            ("evaluate", "evaluate persisted bundles and emit reports"),
            ("report", "render the summary table from saved reports"),
            ("all", "generate, train and evaluate in one go")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--preset", choices=("full", "desk"), default=None)
        p.add_argument("--models", type=str, default=None,
                       help="comma-separated roster, e.g. MTM,PSC,TCN10")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", type=str, default=None,
                       help=f"output directory (default $EARLYCAST_OUT or {default_out_dir()!r})")
        p.add_argument("--emit-traces", action="store_true", default=None)
        p.add_argument("--emit-predictions", action="store_true", default=None)
    return parser


def _config_from_args(args) -> "experiments.ExperimentConfig":
    overrides = {
        "master_seed": args.seed,
        "preset": args.preset,
        "workers": args.workers,
        "out_dir": args.out,
        "emit_traces": args.emit_traces,
        "emit_predictions": args.emit_predictions,
    }
    if args.models:
        overrides["models"] = tuple(m.strip().upper() for m in args.models.split(",") if m.strip())
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config_from_args(args)
    except (_UsageError, ValueError, DataFormatError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "generate":
            path = experiments.cmd_generate(cfg)
            print(f"wrote dataset under {path}")
            return EXIT_OK
        if args.command == "train":
            records = experiments.cmd_train(cfg)
            failures = {r["repetition"]: r["failures"] for r in records if r["failures"]}
            if failures:
                print(f"training failures: {failures}", file=sys.stderr)
                return EXIT_TRAINING
            print(f"trained {len(records)} repetition(s) into {cfg.out_dir}")
            return EXIT_OK
        if args.command == "evaluate":
            experiments.cmd_evaluate(cfg)
            print(f"reports written under {Path(cfg.out_dir) / 'reports'}")
            return EXIT_OK
        if args.command == "report":
            path = Path(cfg.out_dir) / "reports" / "mean_report.json"
            if not path.exists():
                raise DataFormatError(f"{path}: no reports found; run evaluate first")
            mean_report = json.loads(path.read_text(encoding="utf-8"))
            print(experiments.render_summary(mean_report), end="")
            return EXIT_OK
        if args.command == "all":
            experiments.cmd_generate(cfg)
            records = experiments.cmd_train(cfg)
            experiments.cmd_evaluate(cfg)
            summary = (Path(cfg.out_dir) / "reports" / "summary.txt").read_text(encoding="utf-8")
            print(summary, end="")
            if any(r["failures"] for r in records):
                return EXIT_TRAINING
            return EXIT_OK
    except (DataFormatError, KinematicsError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EarlycastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
