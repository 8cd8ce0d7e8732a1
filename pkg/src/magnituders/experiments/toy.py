"""Toy implicit-representation studies: image and SDF fitting, distillation, bundling cost."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..architectures import nerf_baseline, nerf_mag, sdf_network
from ..distill import capture, distill_closed_form, replace_layer, subsample
from ..errors import InvalidArgument
from ..fusion import fuse_network
from ..layers import Network, TrainConfig, mac_count, param_count, train
from ..numerics import EnsembleKind, RngStream
from ..serialization import load_network, save_network
from .config import Experiment, ExperimentConfig
from .inr import composite_sdf, grid_coords, positional_encoding, procedural_image, psnr, sdf_errors
from .results import ExperimentResult, Method, ResultRow, TrendCheck

BASELINE_STREAM = 20
MAG_STREAM = 21
BATCH_STREAM = 22
DR_STREAM = 23
SUBSAMPLE_STREAM = 30
DISTILL_STREAM = 31

IMAGE_DISTILL_LAYER = 7
SDF_DISTILL_LAYER = 3
PSNR_PARITY_DB = 1.0
PSNR_INVERSION_DB = 0.1


@dataclass(frozen=True)
class Task:
    """Inputs, targets and scoring for one toy problem."""

    name: str
    X: np.ndarray
    Y: np.ndarray
    head: str
    size: int

    def score(self, net: Network) -> dict[str, float]:
        pred = net.forward(self.X)[self.head]
        if self.name == "image":
            return {"psnr_image": psnr(pred, self.Y)}
        l1_avg, l1_surf = sdf_errors(pred, self.Y, surface_band=2.0 / self.size)
        return {"l1_avg_sdf": l1_avg, "l1_surf_sdf": l1_surf}

    def predict(self, net: Network) -> np.ndarray:
        return net.forward(self.X)[self.head]


def image_task(size: int = 64) -> Task:
    """RGB fit of the procedural image from a 60-dim encoding of pixel centres."""
    return Task("image", positional_encoding(grid_coords(size)), procedural_image(size), "rgb", size)


def sdf_task(size: int = 128, n_freqs: int = 6) -> Task:
    """Signed distance of the circle-and-box shape from raw plus encoded coordinates."""
    P = grid_coords(size)
    X = positional_encoding(P, n_freqs=n_freqs, dim=None, include_input=True)
    return Task("sdf", X, composite_sdf(P)[:, None], "sdf", size)


def build_task(name: str, cfg: ExperimentConfig) -> Task:
    if name == "image":
        return image_task(cfg.image_size)
    if name == "sdf":
        return sdf_task(cfg.sdf_size, cfg.sdf_frequencies)
    raise InvalidArgument(f"unknown task {name!r}")


def baseline_net(task: Task, seed: int) -> Network:
    rng = RngStream(seed, BASELINE_STREAM)
    if task.name == "image":
        return nerf_baseline(rng, input_dim=task.X.shape[1])
    return sdf_network(rng, task.X.shape[1])


def mag_net(task: Task, seed: int, m: int, ensemble: EnsembleKind) -> Network:
    rng = RngStream(seed, MAG_STREAM, (m,))
    if task.name == "image":
        return nerf_mag(rng, m, ensemble=ensemble, input_dim=task.X.shape[1])
    return sdf_network(rng, task.X.shape[1], mag_features=m, ensemble=ensemble)


def fit(net: Network, task: Task, cfg: ExperimentConfig, seed: int) -> tuple[Network, float]:
    """Train with Adam; every variant of a seed sees the same batch order."""
    tcfg = TrainConfig(cfg.epochs, cfg.batch_size, cfg.learning_rate, RngStream(seed, BATCH_STREAM))
    start = time.perf_counter()
    trained, _ = train(net, task.X, {task.head: task.Y}, tcfg)
    return trained, time.perf_counter() - start


def _method(ensemble: EnsembleKind) -> Method:
    return Method.MAG_ORF if ensemble is EnsembleKind.BLOCK_ORTHOGONAL else Method.MAG_IID


def _dump(cfg: ExperimentConfig, result: ExperimentResult, task: Task, tag: str, pred: np.ndarray) -> None:
    if not cfg.dumps:
        return
    folder = Path(cfg.out) / "reconstructions"
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"{task.name}_{tag}.npz"
    np.savez(path, prediction=pred, target=task.Y, size=task.size)
    result.artifacts.append(path)


def _fusion_rows(exp: str, seed: int, m: int, method: Method, task: Task, net: Network, trainable: int):
    fused = fuse_network(net)
    diff = float(np.max(np.abs(fused.forward_raw(task.X) - net.forward_raw(task.X))))
    suffix = task.name
    return [
        ResultRow(exp, seed, m, method, f"macs_{suffix}", mac_count(net), 0.0, trainable),
        ResultRow(exp, seed, m, method, f"macs_fused_{suffix}", mac_count(fused), 0.0, trainable),
        ResultRow(exp, seed, m, method, f"fusion_max_abs_diff_{suffix}", diff, 0.0, trainable),
    ]


def run_toy_inr(cfg: ExperimentConfig) -> ExperimentResult:
    """Fit the image and SDF tasks with dense baselines and MAG variants."""
    if cfg.experiment is not Experiment.TOY_INR:
        raise InvalidArgument(f"config is for {cfg.experiment.value}")
    exp = cfg.experiment.value
    result = ExperimentResult()
    for task_name in cfg.tasks:
        task = build_task(task_name, cfg)
        for seed in cfg.seed_list():
            base, secs = fit(baseline_net(task, seed), task, cfg, seed)
            base_params = param_count(base)[0]
            for metric, value in task.score(base).items():
                result.rows.append(ResultRow(exp, seed, 0, Method.BASELINE, metric, value, secs, base_params))
            result.rows.append(ResultRow(exp, seed, 0, Method.BASELINE, f"macs_{task.name}", mac_count(base), 0.0, base_params))
            _dump(cfg, result, task, f"seed{seed}_baseline", task.predict(base))
            for m in cfg.rf_sweep:
                for ensemble in cfg.ensembles:
                    method = _method(ensemble)
                    net, secs = fit(mag_net(task, seed, m, ensemble), task, cfg, seed)
                    params = param_count(net)[0]
                    for metric, value in task.score(net).items():
                        result.rows.append(ResultRow(exp, seed, m, method, metric, value, secs, params))
                    result.rows.extend(_fusion_rows(exp, seed, m, method, task, net, params))
                    _dump(cfg, result, task, f"seed{seed}_{method.value.lower()}_m{m}", task.predict(net))
    result.checks.extend(toy_inr_checks(result, cfg))
    return result


def _mean(result: ExperimentResult, method: Method, metric: str, m: int) -> float:
    vals = [r.value for r in result.select(method=method, metric=metric, m=m)]
    return float(np.mean(vals)) if vals else float("nan")


def toy_inr_checks(result: ExperimentResult, cfg: ExperimentConfig) -> list[TrendCheck]:
    checks = []
    for ensemble in cfg.ensembles:
        method = _method(ensemble)
        for m in cfg.rf_sweep:
            if "image" in cfg.tasks:
                base = _mean(result, Method.BASELINE, "psnr_image", 0)
                mag = _mean(result, method, "psnr_image", m)
                checks.append(
                    TrendCheck(
                        f"{method.value} m={m} image PSNR within {PSNR_PARITY_DB} dB of baseline (mean of {cfg.seeds} seeds)",
                        mag >= base - PSNR_PARITY_DB,
                        f"MAG {mag:.2f} dB, baseline {base:.2f} dB, MAG - baseline {mag - base:+.2f} dB",
                    )
                )
            for task in cfg.tasks:
                diffs = result.select(method=method, metric=f"fusion_max_abs_diff_{task}", m=m)
                worst = max(r.value for r in diffs)
                checks.append(TrendCheck(f"{method.value} m={m} {task} fused output matches unfused within 1e-9", worst <= 1e-9, f"max |diff| {worst:.3g}"))
                unfused = result.select(method=method, metric=f"macs_{task}", m=m)[0]
                fused = result.select(method=method, metric=f"macs_fused_{task}", m=m)[0]
                checks.append(
                    TrendCheck(f"{method.value} m={m} {task} fused MACs below unfused", fused.value < unfused.value, f"{fused.value:.0f} vs {unfused.value:.0f}")
                )
    return checks


# --------------------------------------------------------------------------
# distillation bench
# --------------------------------------------------------------------------


def cached_baseline(task: Task, cfg: ExperimentConfig, seed: int) -> tuple[Network, bool]:
    """Load the trained baseline from ``cfg.out`` or train and store it.

    The cache key covers everything that determines the trained weights.
    """
    key = f"baseline_{task.name}{task.size}_seed{seed}_e{cfg.epochs}_b{cfg.batch_size}_lr{cfg.learning_rate:g}"
    if task.name == "sdf":
        key += f"_f{cfg.sdf_frequencies}"
    path = Path(cfg.out) / "models" / f"{key}.npz"
    if path.exists():
        return load_network(path), True
    net, _ = fit(baseline_net(task, seed), task, cfg, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, path)
    return net, False


def _quality_metric(task: Task) -> tuple[str, float]:
    """Primary quality metric and its sign (+1 when larger is better)."""
    return ("psnr_image", 1.0) if task.name == "image" else ("l1_avg_sdf", -1.0)


def run_distill_bench(cfg: ExperimentConfig) -> ExperimentResult:
    """Replace one trained layer by closed-form MAG layers across ``rf_sweep``."""
    if cfg.experiment is not Experiment.DISTILL_BENCH:
        raise InvalidArgument(f"config is for {cfg.experiment.value}")
    exp = cfg.experiment.value
    result = ExperimentResult()
    for task_name in cfg.tasks:
        task = build_task(task_name, cfg)
        layer = cfg.distill_layer
        if layer is None:
            layer = IMAGE_DISTILL_LAYER if task.name == "image" else SDF_DISTILL_LAYER
        for seed in cfg.seed_list():
            base, _ = cached_baseline(task, cfg, seed)
            base_params = param_count(base)[0]
            for metric, value in task.score(base).items():
                result.rows.append(ResultRow(exp, seed, 0, Method.BASELINE, metric, value, 0.0, base_params))
            ds = capture(base, layer, task.X, probe=f"{task.name} grid {task.size}x{task.size}")
            if cfg.subsample < 1.0:
                ds = subsample(ds, cfg.subsample, RngStream(seed, SUBSAMPLE_STREAM))
            for ensemble in cfg.ensembles:
                method = _method(ensemble)
                for m in cfg.rf_sweep:
                    mag, rep = distill_closed_form(ds, m, ensemble, RngStream(seed, DISTILL_STREAM, (layer,)), cfg.ridge)
                    net = replace_layer(base, layer, mag)
                    params = param_count(net)[0]
                    values = {f"fit_mse_{task.name}": rep.fit_mse, f"rank_deficient_{task.name}": float(rep.rank_deficient)}
                    values.update(task.score(net))
                    for metric, value in values.items():
                        result.rows.append(ResultRow(exp, seed, m, method, metric, value, rep.solve_seconds, params))
                    fused = fuse_network(net)
                    diff = float(np.max(np.abs(fused.forward_raw(task.X) - net.forward_raw(task.X))))
                    result.rows.append(ResultRow(exp, seed, m, method, f"fusion_max_abs_diff_{task.name}", diff, 0.0, params))
        result.checks.extend(distill_checks(result, cfg, task))
    return result


def count_inversions(values, tolerance: float) -> tuple[int, int]:
    """``(small, large)`` counts of decreases between consecutive values.

    A decrease no larger than ``tolerance`` is small.
    """
    small = large = 0
    for a, b in zip(values, values[1:]):
        if b < a:
            if a - b <= tolerance:
                small += 1
            else:
                large += 1
    return small, large


def distill_checks(result: ExperimentResult, cfg: ExperimentConfig, task: Task) -> list[TrendCheck]:
    checks = []
    metric, sign = _quality_metric(task)
    for ensemble in cfg.ensembles:
        method = _method(ensemble)
        for seed in cfg.seed_list():
            fits = [result.select(method=method, metric=f"fit_mse_{task.name}", m=m, seed=seed)[0].value for m in cfg.rf_sweep]
            # the 1e-8 ridge can perturb an exact tie by a relative amount of that order
            ok = all(b <= a * (1.0 + 1e-9) for a, b in zip(fits, fits[1:]))
            checks.append(
                TrendCheck(
                    f"{method.value} {task.name} seed={seed} fit MSE non-increasing in m",
                    ok,
                    ", ".join(f"{v:.3g}" for v in fits),
                )
            )
            quality = [result.select(method=method, metric=metric, m=m, seed=seed)[0].value for m in cfg.rf_sweep]
            tol = PSNR_INVERSION_DB if task.name == "image" else 0.0
            small, large = count_inversions([sign * q for q in quality], tol)
            checks.append(
                TrendCheck(
                    f"{method.value} {task.name} seed={seed} post-replacement {metric} improves with m (at most one inversion <= {tol:g})",
                    large == 0 and small <= 1,
                    ", ".join(f"m={m}: {q:.4g}" for m, q in zip(cfg.rf_sweep, quality)),
                )
            )
    return checks


# --------------------------------------------------------------------------
# bundling cost bench
# --------------------------------------------------------------------------


def _forward_seconds(net: Network, X: np.ndarray, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        net.forward_raw(X)
        best = min(best, time.perf_counter() - start)
    return best


def run_fuse_bench(cfg: ExperimentConfig) -> ExperimentResult:
    """Cost and quality of the SDF net: baseline, reduced last hidden width, MAG with and without bundling."""
    if cfg.experiment is not Experiment.FUSE_BENCH:
        raise InvalidArgument(f"config is for {cfg.experiment.value}")
    exp = cfg.experiment.value
    task = sdf_task(cfg.sdf_size, cfg.sdf_frequencies)
    e = task.X.shape[1]
    result = ExperimentResult()

    def record(seed: int, m: int, method: Method, net: Network, secs: float, tag: str = "") -> None:
        params = param_count(net)[0]
        for metric, value in task.score(net).items():
            result.rows.append(ResultRow(exp, seed, m, method, metric + tag, value, secs, params))
        result.rows.append(ResultRow(exp, seed, m, method, "macs" + tag, mac_count(net), _forward_seconds(net, task.X), params))

    for seed in cfg.seed_list():
        base, secs = fit(baseline_net(task, seed), task, cfg, seed)
        record(seed, 0, Method.BASELINE, base, secs)
        dr, secs = fit(sdf_network(RngStream(seed, DR_STREAM), e, last_hidden=cfg.dr_width), task, cfg, seed)
        record(seed, 0, Method.DENSE_DR, dr, secs)
        for ensemble in cfg.ensembles:
            for m in cfg.rf_sweep:
                net, secs = fit(mag_net(task, seed, m, ensemble), task, cfg, seed)
                record(seed, m, _method(ensemble), net, secs)
                record(seed, m, _method(ensemble), fuse_network(net), 0.0, "_fused")
    result.checks.extend(fuse_checks(result, cfg))
    return result


def fuse_checks(result: ExperimentResult, cfg: ExperimentConfig) -> list[TrendCheck]:
    checks = [TrendCheck("BASELINE rows present", bool(result.select(method=Method.BASELINE)))]
    base_macs = result.select(method=Method.BASELINE, metric="macs")[0].value
    dr_macs = result.select(method=Method.DENSE_DR, metric="macs")[0].value
    for ensemble in cfg.ensembles:
        method = _method(ensemble)
        for m in cfg.rf_sweep:
            unfused = result.select(method=method, metric="macs", m=m)[0].value
            fused = result.select(method=method, metric="macs_fused", m=m)[0].value
            checks.append(
                TrendCheck(
                    f"{method.value} m={m} MACs: fused < unfused < baseline",
                    fused < unfused < base_macs,
                    f"{fused:.0f} < {unfused:.0f} < {base_macs:.0f} (DR {dr_macs:.0f})",
                )
            )
            for metric in ("l1_avg_sdf", "l1_surf_sdf"):
                mag_err = _mean(result, method, metric + "_fused", m)
                dr_err = _mean(result, Method.DENSE_DR, metric, 0)
                checks.append(
                    TrendCheck(
                        f"DENSE_DR {metric} worse than fused {method.value} m={m} (mean of {cfg.seeds} seeds)",
                        dr_err > mag_err,
                        f"DR {dr_err:.4g} vs MAG {mag_err:.4g}, MACs {dr_macs:.0f} vs {fused:.0f}",
                    )
                )
    return checks

