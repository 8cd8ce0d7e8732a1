"""Approximating a frozen random Linear-activation layer with random-feature layers.

For fixed features ``F`` (``n x m``) the MSE of ``F W^T`` against ``Y`` is a
quadratic in ``W`` whose gradient needs only the Gram statistics
``F^T F / n`` and ``Y^T F / n``. Full-batch Adam therefore runs on ``m x m``
matrices instead of the ``n x m`` features, with iterates identical to
full-batch Adam on the features themselves.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.stats import spearmanr

from ..errors import InvalidArgument
from ..layers import RELU, Adam
from ..numerics import EnsembleKind, RngStream, sample_ensemble
from .config import Experiment, ExperimentConfig
from .results import ExperimentResult, Method, ResultRow, TrendCheck

# stream ids under each seed
DATA_STREAM = 0
G_STREAM = 1
INIT_STREAM = 2
SNNK_STREAM = 3


def fit_readout_adam(F: np.ndarray, Y: np.ndarray, W0: np.ndarray, steps: int, lr: float, adam: Adam = Adam()):
    """Full-batch Adam on ``mean((F W^T - Y)^2)`` from ``W0``.

    Returns the final weight and its exact MSE (computed from the features,
    not the Gram statistics, to avoid cancellation).
    """
    n, l = Y.shape
    if F.shape[0] != n or W0.shape != (l, F.shape[1]):
        raise InvalidArgument(f"shapes F {F.shape}, Y {Y.shape}, W0 {W0.shape} are inconsistent")
    W = np.array(W0, dtype=np.float64, copy=True)
    if steps > 0:
        A = F.T @ F / n
        B = Y.T @ F / n
        m1 = np.zeros_like(W)
        v = np.zeros_like(W)
        b1, b2, eps = adam.beta1, adam.beta2, adam.eps
        for t in range(1, steps + 1):
            g = 2.0 * (W @ A - B) / l
            m1 = b1 * m1 + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            W -= lr * (m1 / (1.0 - b1**t)) / (np.sqrt(v / (1.0 - b2**t)) + eps)
            if not np.all(np.isfinite(W)):
                raise InvalidArgument(f"readout fit diverged at step {t}; lower the learning rate")
    resid = F @ W.T - Y
    return W, float(np.mean(resid * resid))


def synthetic_problem(seed: int, n: int, d: int, l: int, activation) -> tuple[np.ndarray, np.ndarray]:
    """Inputs uniform in ``(0, 1)^d`` and outputs of a random dense layer.

    Target weight and bias are uniform in ``[-1/sqrt(d), 1/sqrt(d)]``; the
    same draws are used for every target activation.
    """
    gen = RngStream(seed, DATA_STREAM).generator()
    X = gen.uniform(0.0, 1.0, (n, d))
    bound = 1.0 / math.sqrt(d)
    W = gen.uniform(-bound, bound, (l, d))
    b = gen.uniform(-bound, bound, l)
    return X, activation(X @ W.T + b)


def mag_features(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    return RELU(X @ G.T)


def snnk_features(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Input tower ``[sin(G x), cos(G x)]`` with ``G`` of ``m/2`` rows."""
    Z = X @ G.T
    return np.concatenate([np.sin(Z), np.cos(Z)], axis=1)


def _init_weight(seed: int, m: int, l: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(m)
    return RngStream(seed, INIT_STREAM, (m,)).generator().uniform(-bound, bound, (l, m))


def _method(ensemble: EnsembleKind) -> Method:
    return Method.MAG_ORF if ensemble is EnsembleKind.BLOCK_ORTHOGONAL else Method.MAG_IID


def run_synth_approx(cfg: ExperimentConfig) -> ExperimentResult:
    """MSE of MAG (and SNNK) layers fitted to random ReLU/Softplus-linear targets.

    For each seed ``G`` is drawn once per ensemble at the largest ``m`` from a
    single stream, so smaller ``m`` use nested row prefixes; the orthogonal
    draw is the Gram-Schmidt image of the iid draw. The initial readout for a
    given ``(seed, m)`` is shared by every method.
    """
    if cfg.experiment is not Experiment.SYNTH_APPROX:
        raise InvalidArgument(f"config is for {cfg.experiment.value}")
    exp = cfg.experiment.value
    result = ExperimentResult()
    m_max = cfg.rf_sweep[-1]
    for seed in cfg.seed_list():
        for target in cfg.targets:
            metric = f"mse_{target.kind}"
            X, Y = synthetic_problem(seed, cfg.n_samples, cfg.d, cfg.l, target)
            methods = [(_method(e), sample_ensemble(m_max, cfg.d, e, RngStream(seed, G_STREAM)), mag_features) for e in cfg.ensembles]
            if cfg.snnk:
                G_snnk = sample_ensemble(m_max // 2, cfg.d, EnsembleKind.IID_GAUSSIAN, RngStream(seed, SNNK_STREAM))
                methods.append((Method.SNNK, G_snnk, snnk_features))
            for m in cfg.rf_sweep:
                W0 = _init_weight(seed, m, cfg.l)
                for method, G_full, featurize in methods:
                    rows = m // 2 if method is Method.SNNK else m
                    start = time.perf_counter()
                    F = featurize(X, G_full[:rows])
                    _, mse = fit_readout_adam(F, Y, W0, cfg.epochs, cfg.learning_rate)
                    elapsed = time.perf_counter() - start
                    result.rows.append(ResultRow(exp, seed, m, method, metric, mse, elapsed, cfg.l * m))
    result.checks.extend(synth_checks(result, cfg))
    return result


def _table(result: ExperimentResult, method: Method, metric: str, cfg: ExperimentConfig) -> np.ndarray:
    """``(seeds, len(rf_sweep))`` array of values."""
    lookup = {(r.seed, r.m): r.value for r in result.select(method=method, metric=metric)}
    return np.array([[lookup[(s, m)] for m in cfg.rf_sweep] for s in cfg.seed_list()])


def synth_checks(result: ExperimentResult, cfg: ExperimentConfig) -> list[TrendCheck]:
    checks = []
    ms = list(cfg.rf_sweep)
    for target in cfg.targets:
        metric = f"mse_{target.kind}"
        tables = {_method(e): _table(result, _method(e), metric, cfg) for e in cfg.ensembles}
        for method, tab in tables.items():
            if len(ms) >= 2:
                rhos = [float(spearmanr(ms, row)[0]) if np.ptp(row) > 0 else 0.0 for row in tab]
                checks.append(
                    TrendCheck(
                        f"{method.value} {metric} decreasing in m (Spearman <= -0.9 every seed)",
                        max(rhos) <= -0.9,
                        f"worst Spearman {max(rhos):.3f} over {len(rhos)} seeds",
                    )
                )
                ends = tab[:, -1] < tab[:, 0]
                checks.append(
                    TrendCheck(
                        f"{method.value} {metric} at m={ms[-1]} below m={ms[0]} every seed",
                        bool(ends.all()),
                        f"{int(ends.sum())}/{len(ends)} seeds",
                    )
                )
        if Method.MAG_ORF in tables and Method.MAG_IID in tables:
            orf, iid = tables[Method.MAG_ORF].mean(axis=0), tables[Method.MAG_IID].mean(axis=0)
            bad = [m for m, o, i in zip(ms, orf, iid) if o > i]
            detail = ", ".join(f"m={m}: {o:.4g} vs {i:.4g}" for m, o, i in zip(ms, orf, iid))
            checks.append(TrendCheck(f"mean {metric} ORF <= IID at every m", not bad, detail))
        if cfg.snnk and Method.MAG_ORF in tables:
            snnk = _table(result, Method.SNNK, metric, cfg).mean(axis=0)
            mag = tables[Method.MAG_ORF].mean(axis=0)
            worse = [m for m, a, s in zip(ms, mag, snnk) if a >= s]
            checks.append(
                TrendCheck(
                    f"mean {metric} MAG_ORF < SNNK at matched parameters",
                    not worse,
                    "all m" if not worse else f"not at m={worse}",
                )
            )
    return checks
