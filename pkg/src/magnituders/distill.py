"""Replace a trained layer with a MAG layer fitted in closed form.

The target layer's inputs ``X`` and (post-activation) outputs ``Y`` are
recorded on probe inputs. For a frozen random ``G`` the features
``X' = ReLU(X G^T)`` are fixed, so the MAG weight is the least-squares
solution of ``X' W^T ~ Y``; no gradient steps are involved.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .layers import RELU, DenseLayer, GSource, MagLayer, Network
from .numerics import EnsembleKind, RngStream, as_matrix, sample_ensemble, solve_least_squares

__all__ = [
    "CaptureDataset",
    "DistillReport",
    "capture",
    "subsample",
    "distill_closed_form",
    "replace_layer",
    "DEFAULT_RIDGE",
]

DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True)
class CaptureDataset:
    X: np.ndarray
    Y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        X = as_matrix(self.X, "X")
        Y = as_matrix(self.Y, "Y")
        if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
            raise InvalidArgument(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}; need equal and >= 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class DistillReport:
    fit_mse: float
    solve_seconds: float
    m: int
    ridge: float
    rank_deficient: bool
    rank: int


def capture(net: Network, layer_index: int, probe_inputs, *, probe: str = "") -> CaptureDataset:
    """Record the input and output of ``net.layers[layer_index]`` on a probe batch.

    The input includes the skip-concatenated network input when the layer
    sits at a skip point; the output is post-activation.
    """
    if not 0 <= layer_index < len(net.layers):
        raise InvalidArgument(f"layer index {layer_index} out of range for {len(net.layers)} layers")
    X, Y = net.layer_input(probe_inputs, layer_index)
    prov = {"network": net.meta.get("shape", "network"), "layer_index": int(layer_index), "probe": probe}
    return CaptureDataset(X.copy(), Y.copy(), prov)


def subsample(ds: CaptureDataset, fraction: float, rng: RngStream) -> CaptureDataset:
    """Uniform row subsample without replacement, ``round(fraction * n)`` rows."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgument("fraction must lie in (0, 1]")
    k = int(round(fraction * ds.n))
    if k < 1:
        raise InvalidArgument(f"fraction {fraction} of {ds.n} rows leaves no rows")
    idx = rng.generator().permutation(ds.n)[:k]
    prov = dict(ds.provenance, subsample=float(fraction))
    return CaptureDataset(ds.X[idx], ds.Y[idx], prov)


def distill_closed_form(
    ds: CaptureDataset,
    m: int,
    ensemble: EnsembleKind | str,
    rng: RngStream,
    ridge: float = DEFAULT_RIDGE,
) -> tuple[MagLayer, DistillReport]:
    """Fit a bias-free ReLU MAG layer to ``ds`` by least squares.

    ``G`` is drawn from ``rng`` with :func:`sample_ensemble`, so for a fixed
    ``rng`` a smaller ``m`` uses the leading rows of a larger one.
    """
    if m < 1:
        raise InvalidArgument("m must be >= 1")
    ensemble = EnsembleKind.parse(ensemble)
    d = ds.X.shape[1]
    G = sample_ensemble(m, d, ensemble, rng)
    start = time.perf_counter()
    feats = RELU(ds.X @ G.T)
    W_t, info = solve_least_squares(feats, ds.Y, ridge, return_info=True)
    elapsed = time.perf_counter() - start
    resid = feats @ W_t - ds.Y
    mse = float(np.mean(resid * resid))
    layer = MagLayer(W_t.T, G, RELU, None, GSource(rng.seed, rng.stream_id, rng.path, ensemble, m, d))
    report = DistillReport(mse, elapsed, int(m), float(ridge), bool(info.rank_deficient), info.rank)
    return layer, report


def _layer_input_dim(net: Network, index: int) -> int:
    return net.layers[index].in_dim


def replace_layer(net: Network, layer_index: int, mag: MagLayer) -> Network:
    """Copy of ``net`` with one dense layer swapped for ``mag``."""
    if not 0 <= layer_index < len(net.layers):
        raise InvalidArgument(f"layer index {layer_index} out of range for {len(net.layers)} layers")
    old = net.layers[layer_index]
    if not isinstance(old, DenseLayer):
        raise InvalidArgument(f"layer {layer_index} is not a dense layer")
    if mag.in_dim != _layer_input_dim(net, layer_index) or mag.out_dim != old.out_dim:
        raise InvalidArgument(
            f"MAG layer maps {mag.in_dim}->{mag.out_dim}, layer {layer_index} maps {old.in_dim}->{old.out_dim}"
        )
    new = net.copy()
    new.layers[layer_index] = mag
    new.meta = dict(new.meta, replaced=sorted(set(new.meta.get("replaced", [])) | {layer_index}))
    return Network(new.layers, new.input_dim, new.skips, new.heads, meta=new.meta)
