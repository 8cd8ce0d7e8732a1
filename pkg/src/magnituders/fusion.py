"""Bundling a MAG layer into the affine layer that follows it.

For a MAG layer ``Y1 = f(X G^T) W1^T + b1`` followed by ``act(Y1 W2^T + b2)``
the pair collapses to ``act(f(X G^T) (W2 W1)^T + (W2 b1 + b2))``. When the
second layer also consumes a skip-concatenated copy of the network input, its
weight is split column-wise and the input block is carried alongside.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument
from .layers import IDENTITY, DenseLayer, FusedLayer, MagLayer, Network

__all__ = ["bundle", "bundle_with_concat", "fuse_network", "sequential_macs", "fused_macs"]


def bundle(mag: MagLayer, next_layer: DenseLayer) -> FusedLayer:
    if next_layer.in_dim != mag.out_dim:
        raise InvalidArgument(
            f"next layer expects {next_layer.in_dim} inputs, MAG layer produces {mag.out_dim}"
        )
    fused, _ = bundle_with_concat(mag, next_layer, (0, mag.out_dim))
    return fused


def bundle_with_concat(
    mag: MagLayer, next_layer: DenseLayer, split: tuple[int, int]
) -> tuple[FusedLayer, DenseLayer | None]:
    """Bundle ``mag`` into a layer whose input is ``[x_concat, mag_output]``.

    Returns the fused layer (which keeps the ``x_concat`` weight block as
    ``W_concat``) and that block as a bias-free identity layer, or ``None``
    when ``concat_dim == 0``.
    """
    concat_dim, mag_out = (int(s) for s in split)
    if concat_dim < 0 or mag_out != mag.out_dim:
        raise InvalidArgument(f"split {split} does not match MAG output dim {mag.out_dim}")
    if next_layer.in_dim != concat_dim + mag_out:
        raise InvalidArgument(
            f"split {split} sums to {concat_dim + mag_out}, next layer takes {next_layer.in_dim}"
        )
    W_concat = next_layer.W[:, :concat_dim]
    W_mag = next_layer.W[:, concat_dim:]
    W_hat = W_mag @ mag.W
    b = next_layer.b.copy()
    if mag.b is not None:
        b = b + W_mag @ mag.b
    fused = FusedLayer(
        W_hat=W_hat,
        b=b,
        G=mag.G,
        f=mag.f,
        activation=next_layer.activation,
        W_concat=W_concat.copy() if concat_dim else None,
    )
    concat = DenseLayer(W_concat.copy(), np.zeros(next_layer.out_dim), IDENTITY) if concat_dim else None
    return fused, concat


def fuse_network(net: Network) -> Network:
    """Bundle every MAG layer that is directly followed by a dense layer.

    Only affine operations (and the input concatenation at skip points) may
    sit between the pair; the dense layer's activation is applied after the
    fused affine map. Returns ``net`` itself when nothing is fusable.
    """
    layers = net.layers
    new_layers = []
    index_map: dict[int, int] = {}
    i = 0
    fired = 0
    while i < len(layers):
        layer = layers[i]
        nxt = layers[i + 1] if i + 1 < len(layers) else None
        if isinstance(layer, MagLayer) and isinstance(nxt, DenseLayer) and i not in net.skips:
            if (i + 1) in net.skips:
                fused, _ = bundle_with_concat(layer, nxt, (net.input_dim, layer.out_dim))
            else:
                fused = bundle(layer, nxt)
            index_map[i] = index_map[i + 1] = len(new_layers)
            new_layers.append(fused)
            fired += 1
            i += 2
            continue
        index_map[i] = len(new_layers)
        new_layers.append(layer)
        i += 1
    if not fired:
        return net
    skips = set()
    for k in net.skips:
        j = index_map[k]
        if not isinstance(new_layers[j], FusedLayer):
            skips.add(j)
    meta = dict(net.meta, fused_sites=net.meta.get("fused_sites", 0) + fired)
    return Network(new_layers, net.input_dim, skips, net.heads, fused=True, meta=meta)


def sequential_macs(mag: MagLayer, next_layer: DenseLayer) -> int:
    """Per-row multiply-accumulates of evaluating the pair unbundled."""
    return mag.macs() + next_layer.macs()


def fused_macs(fused: FusedLayer) -> int:
    return fused.macs()
