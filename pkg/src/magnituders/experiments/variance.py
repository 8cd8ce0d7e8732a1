"""Variance of the magnituder kernel estimator under iid and orthogonal ensembles."""

from __future__ import annotations

import math
import time

import numpy as np

from ..errors import InvalidArgument
from ..kernels import KernelEstimator, ScalarFunction, estimator_variance, kernel_mag_exact
from ..numerics import EnsembleKind, RngStream
from .config import Experiment, ExperimentConfig
from .results import ExperimentResult, Method, ResultRow, TrendCheck

INPUT_STREAM = 10
ESTIMATOR_STREAM = 11


def variance_inputs(seed: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """``u`` uniform in ``[0, 1)^d`` and ``v`` uniform on the unit sphere."""
    gen = RngStream(seed, INPUT_STREAM).generator()
    u = gen.uniform(0.0, 1.0, d)
    v = gen.standard_normal(d)
    return u, v / np.linalg.norm(v)


def _method(ensemble: EnsembleKind) -> Method:
    return Method.MAG_ORF if ensemble is EnsembleKind.BLOCK_ORTHOGONAL else Method.MAG_IID


def run_variance_study(cfg: ExperimentConfig) -> ExperimentResult:
    """Tabulate estimator variance with jackknife standard errors.

    Both ensembles use the same estimator stream, so the orthogonal draws are
    the Gram-Schmidt images of the iid ones.
    """
    if cfg.experiment is not Experiment.VARIANCE_STUDY:
        raise InvalidArgument(f"config is for {cfg.experiment.value}")
    exp = cfg.experiment.value
    fns = [ScalarFunction.parse(f) for f in cfg.functions]
    result = ExperimentResult()
    reports = {}
    for seed in cfg.seed_list():
        u, v = variance_inputs(seed, cfg.d)
        for fi, fn in enumerate(fns):
            try:
                exact = kernel_mag_exact(u, v, fn)
            except InvalidArgument:
                exact = None
            for m in cfg.rf_sweep:
                for ensemble in cfg.ensembles:
                    est = KernelEstimator(ensemble, m, RngStream(seed, ESTIMATOR_STREAM, (fi, m)), functions=(fn,))
                    start = time.perf_counter()
                    rep = estimator_variance(u, v, est, cfg.trials)
                    elapsed = time.perf_counter() - start
                    reports[(seed, str(fn), m, ensemble)] = rep
                    method = _method(ensemble)
                    tag = str(fn)
                    for name, value in (
                        ("variance", rep.variance),
                        ("variance_se", rep.variance_se),
                        ("mean", rep.mean),
                        ("mean_se", rep.mean_se),
                    ):
                        result.rows.append(ResultRow(exp, seed, m, method, f"{name}_{tag}", value, elapsed, 0))
                    if exact is not None:
                        result.rows.append(ResultRow(exp, seed, m, method, f"exact_{tag}", exact, 0.0, 0))
    result.checks.extend(variance_checks(reports, cfg))
    return result


def variance_checks(reports: dict, cfg: ExperimentConfig) -> list[TrendCheck]:
    ort, iid = EnsembleKind.BLOCK_ORTHOGONAL, EnsembleKind.IID_GAUSSIAN
    if ort not in cfg.ensembles or iid not in cfg.ensembles:
        return []
    checks = []
    for seed in cfg.seed_list():
        for fn in cfg.functions:
            tag = str(ScalarFunction.parse(fn))
            for m in cfg.rf_sweep:
                o, i = reports[(seed, tag, m, ort)], reports[(seed, tag, m, iid)]
                combined = math.hypot(o.variance_se, i.variance_se)
                gap = (i.variance - o.variance) / combined if combined > 0 else 0.0
                checks.append(
                    TrendCheck(
                        f"Var_ort <= Var_iid for f={tag}, d={cfg.d}, m={m}, seed={seed}",
                        o.variance <= i.variance,
                        f"{o.variance:.4g} vs {i.variance:.4g}, gap {gap:.2f} combined SE",
                    )
                )
    return checks
