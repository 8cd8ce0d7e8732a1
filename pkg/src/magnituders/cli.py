"""Command-line entry point: ``magnituders <experiment> [--config F] [--seed S] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import InvalidArgument
from .experiments import Experiment, default_config, load_config, run_experiment, write_csv

SUBCOMMANDS = {
    "synth-approx": Experiment.SYNTH_APPROX,
    "variance": Experiment.VARIANCE_STUDY,
    "toy-inr": Experiment.TOY_INR,
    "distill": Experiment.DISTILL_BENCH,
    "fuse-bench": Experiment.FUSE_BENCH,
}

log = logging.getLogger("magnituders")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magnituders", description="Run magnituder experiments and write CSV results.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, exp in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {exp.value} experiment")
        p.add_argument("--config", type=Path, help="YAML file with ExperimentConfig fields")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit); overrides the config")
        p.add_argument("--out", type=Path, help="output directory; overrides the config")
        p.add_argument("--format", choices=["csv"], default="csv", help="result format (only csv)")
        p.add_argument("--quiet", action="store_true", help="only print the summary lines")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    exp = SUBCOMMANDS[args.command]
    try:
        cfg = load_config(args.config, exp) if args.config else default_config(exp)
        overrides = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise InvalidArgument("--seed must be an unsigned 64-bit integer")
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = str(args.out)
        if overrides:
            cfg = cfg.with_(**overrides)
    except (InvalidArgument, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    log.info("running %s (seeds %d, m in %s) -> %s", exp.value, cfg.seeds, list(cfg.rf_sweep), cfg.out)
    result = run_experiment(cfg)
    path = write_csv(result.rows, Path(cfg.out) / f"{exp.value}.csv")
    log.info("wrote %d rows to %s", len(result.rows), path)
    if result.checks:
        print(result.summary())
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
