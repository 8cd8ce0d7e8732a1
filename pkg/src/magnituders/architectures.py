"""Coordinate-network shapes used by the toy experiments.

NeRF-shaped trunk (input 60, width 256, skip of the input into the sixth
layer) and its MAG variant, plus an iSDF-shaped SDF network with a MAG or a
reduced-width last hidden layer.

In the MAG variants one :class:`MagLayer` (frozen ``ReLU(G h)`` followed by a
trainable affine map) stands where the baseline has two consecutive
Linear-ReLU layers, and each MAG layer is followed directly by an affine
layer, so every MAG layer is a bundling site.
"""

from __future__ import annotations

from .layers import IDENTITY, RELU, SIGMOID, Activation, DenseLayer, Head, MagLayer, Network, mag_variance_bound
from .numerics import EnsembleKind, RngStream

NERF_INPUT_DIM = 60
NERF_WIDTH = 256


def _nerf_heads(rgb_activation: Activation) -> tuple[Head, ...]:
    return (Head("density", 0, 1, IDENTITY), Head("rgb", 1, 4, rgb_activation))


def nerf_baseline(
    rng: RngStream,
    *,
    input_dim: int = NERF_INPUT_DIM,
    width: int = NERF_WIDTH,
    rgb_hidden: int = 128,
    rgb_activation: Activation = SIGMOID,
) -> Network:
    """Eight Linear-ReLU trunk layers; the input is re-concatenated at layer 5."""
    dims = [(input_dim, width)] + [(width, width)] * 4 + [(width + input_dim, width)] + [(width, width)] * 2
    layers = [DenseLayer.init(i, o, RELU, rng.child(k)) for k, (i, o) in enumerate(dims)]
    layers.append(DenseLayer.init(width, rgb_hidden, RELU, rng.child(8)))
    layers.append(DenseLayer.init(rgb_hidden, 4, IDENTITY, rng.child(9)))
    return Network(layers, input_dim, {5}, _nerf_heads(rgb_activation), meta={"shape": "nerf_baseline"})


def nerf_mag(
    rng: RngStream,
    m: int = 256,
    *,
    ensemble: EnsembleKind | str = EnsembleKind.BLOCK_ORTHOGONAL,
    input_dim: int = NERF_INPUT_DIM,
    width: int = NERF_WIDTH,
    rgb_hidden: int = 128,
    rgb_activation: Activation = SIGMOID,
) -> Network:
    """MAG-NeRF trunk: MAG, dense, MAG, dense(+input), MAG, then the RGB tail.

    The middle MAG layer feeds the skip layer, whose weight splits into a
    ``(width, input_dim)`` and a ``(width, width)`` block when bundled.
    """

    def mag(k: int, d: int) -> MagLayer:
        return MagLayer.init(
            d, m, width, rng.child(k, 0), ensemble=ensemble, bias=True,
            init_rng=rng.child(k, 1), bound=mag_variance_bound(d, m),
        )

    layers = [
        mag(0, input_dim),
        DenseLayer.init(width, width, RELU, rng.child(1)),
        mag(2, width),
        DenseLayer.init(width + input_dim, width, RELU, rng.child(3)),
        mag(4, width),
        DenseLayer.init(width, rgb_hidden, RELU, rng.child(5)),
        DenseLayer.init(rgb_hidden, 4, IDENTITY, rng.child(6)),
    ]
    return Network(layers, input_dim, {3}, _nerf_heads(rgb_activation), meta={"shape": "nerf_mag", "m": m})


def sdf_network(
    rng: RngStream,
    input_dim: int,
    *,
    width: int = NERF_WIDTH,
    last_hidden: int | None = None,
    mag_features: int | None = None,
    ensemble: EnsembleKind | str = EnsembleKind.BLOCK_ORTHOGONAL,
) -> Network:
    """iSDF-shaped SDF regressor.

    ``dense(e->w), dense(w->w), dense(w+e->w), last hidden, linear(->1)``. The
    last hidden layer is a Linear-ReLU of width ``last_hidden`` (default
    ``width``), or a MAG layer with ``mag_features`` random features.
    """
    if last_hidden is not None and mag_features is not None:
        raise ValueError("choose either a reduced last hidden width or a MAG layer")
    layers = [
        DenseLayer.init(input_dim, width, RELU, rng.child(0)),
        DenseLayer.init(width, width, RELU, rng.child(1)),
        DenseLayer.init(width + input_dim, width, RELU, rng.child(2)),
    ]
    if mag_features is not None:
        layers.append(
            MagLayer.init(
                width, mag_features, width, rng.child(3, 0), ensemble=ensemble, bias=True,
                init_rng=rng.child(3, 1), bound=mag_variance_bound(width, mag_features),
            )
        )
        tail_in, shape = width, "sdf_mag"
    else:
        tail_in = width if last_hidden is None else last_hidden
        layers.append(DenseLayer.init(width, tail_in, RELU, rng.child(3)))
        shape = "sdf_baseline" if last_hidden is None else "sdf_dr"
    layers.append(DenseLayer.init(tail_in, 1, IDENTITY, rng.child(4)))
    meta = {"shape": shape, "m": mag_features, "last_hidden": last_hidden}
    return Network(layers, input_dim, {2}, (Head("sdf", 0, 1, IDENTITY),), meta=meta)
