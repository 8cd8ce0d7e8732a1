"""Experiment harness: configs, runners and CSV results."""

from __future__ import annotations

from .config import DEFAULTS, Experiment, ExperimentConfig, config_from_mapping, default_config, load_config
from .results import COLUMNS, ExperimentResult, Method, ResultRow, TrendCheck, read_csv, rows_to_csv, write_csv
from .synth import run_synth_approx
from .toy import run_distill_bench, run_fuse_bench, run_toy_inr
from .variance import run_variance_study

RUNNERS = {
    Experiment.SYNTH_APPROX: run_synth_approx,
    Experiment.VARIANCE_STUDY: run_variance_study,
    Experiment.TOY_INR: run_toy_inr,
    Experiment.DISTILL_BENCH: run_distill_bench,
    Experiment.FUSE_BENCH: run_fuse_bench,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)


__all__ = [
    "COLUMNS",
    "DEFAULTS",
    "Experiment",
    "ExperimentConfig",
    "ExperimentResult",
    "Method",
    "ResultRow",
    "RUNNERS",
    "TrendCheck",
    "config_from_mapping",
    "default_config",
    "load_config",
    "read_csv",
    "rows_to_csv",
    "run_distill_bench",
    "run_experiment",
    "run_fuse_bench",
    "run_synth_approx",
    "run_toy_inr",
    "run_variance_study",
    "write_csv",
]
