"""On-disk containers for networks and capture datasets.

Both are ``.npz`` archives with a JSON header stored under ``__header__``.

Network header (format ``magnituders.network``, version 1)::

    {"format": ..., "version": 1, "input_dim": int, "skips": [int],
     "fused": bool, "meta": {...},
     "heads": [{"name", "start", "stop", "activation"}],
     "layers": [{"kind": "dense" | "mag" | "fused", ...}]}

Arrays are stored as ``layer{i}.{name}`` (``W``, ``b``, ``G``, ``W_hat``,
``W_concat``). MAG layers also record ``g_source`` (seed, stream id, path,
ensemble, shape) so ``G`` can be checked by regeneration on load.

Capture header (format ``magnituders.capture``, version 1) holds ``rows``,
``in_dim``, ``out_dim`` and ``provenance``; arrays are ``X`` and ``Y``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .distill import CaptureDataset
from .errors import InvalidArgument
from .layers import Activation, DenseLayer, FusedLayer, GSource, Head, MagLayer, Network
from .numerics import EnsembleKind

NETWORK_FORMAT = "magnituders.network"
CAPTURE_FORMAT = "magnituders.capture"
VERSION = 1

__all__ = ["save_network", "load_network", "save_capture", "load_capture"]


def _header(archive) -> dict:
    if "__header__" not in archive:
        raise InvalidArgument("archive has no header")
    return json.loads(bytes(archive["__header__"]).decode("utf-8"))


def _encode(header: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def save_network(net: Network, path: str | Path) -> None:
    arrays: dict[str, np.ndarray] = {}
    specs = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, DenseLayer):
            spec = {"kind": "dense", "activation": str(layer.activation)}
        elif isinstance(layer, MagLayer):
            spec = {"kind": "mag", "f": str(layer.f), "bias": layer.b is not None}
            if layer.g_source is not None:
                src = layer.g_source
                spec["g_source"] = {
                    "seed": src.seed,
                    "stream_id": src.stream_id,
                    "path": list(src.path),
                    "ensemble": src.ensemble.value,
                    "rows": src.rows,
                    "cols": src.cols,
                }
        else:
            spec = {"kind": "fused", "f": str(layer.f), "activation": str(layer.activation)}
        specs.append(spec)
        for name, arr in layer.params() + layer.frozen():
            arrays[f"layer{i}.{name}"] = arr
    header = {
        "format": NETWORK_FORMAT,
        "version": VERSION,
        "input_dim": net.input_dim,
        "skips": sorted(net.skips),
        "fused": net.fused,
        "meta": net.meta,
        "heads": [
            {"name": h.name, "start": h.start, "stop": h.stop, "activation": str(h.activation)}
            for h in net.heads
        ],
        "layers": specs,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __header__=_encode(header), **arrays)


def load_network(path: str | Path, *, verify_g: bool = True) -> Network:
    """Load a network; with ``verify_g`` each recorded ``G`` is regenerated and compared."""
    with np.load(path) as archive:
        header = _header(archive)
        if header.get("format") != NETWORK_FORMAT:
            raise InvalidArgument(f"not a network archive: {header.get('format')!r}")
        if header.get("version") != VERSION:
            raise InvalidArgument(f"unsupported network format version {header.get('version')}")
        layers = []
        for i, spec in enumerate(header["layers"]):
            get = lambda name: archive[f"layer{i}.{name}"]  # noqa: E731
            kind = spec["kind"]
            if kind == "dense":
                layers.append(DenseLayer(get("W"), get("b"), Activation.parse(spec["activation"])))
            elif kind == "mag":
                source = None
                if "g_source" in spec:
                    s = spec["g_source"]
                    source = GSource(
                        int(s["seed"]), int(s["stream_id"]), tuple(s["path"]),
                        EnsembleKind.parse(s["ensemble"]), int(s["rows"]), int(s["cols"]),
                    )
                b = get("b") if spec["bias"] else None
                layer = MagLayer(get("W"), get("G"), Activation.parse(spec["f"]), b, source)
                if verify_g and source is not None and not np.array_equal(source.regenerate(), layer.G):
                    raise InvalidArgument(f"layer {i}: stored G does not match its recorded random stream")
                layers.append(layer)
            elif kind == "fused":
                wc = f"layer{i}.W_concat"
                layers.append(
                    FusedLayer(
                        get("W_hat"), get("b"), get("G"),
                        Activation.parse(spec["f"]), Activation.parse(spec["activation"]),
                        archive[wc] if wc in archive else None,
                    )
                )
            else:
                raise InvalidArgument(f"unknown layer kind {kind!r}")
    heads = tuple(Head(h["name"], h["start"], h["stop"], Activation.parse(h["activation"])) for h in header["heads"])
    return Network(layers, header["input_dim"], header["skips"], heads, fused=header["fused"], meta=header["meta"])


def save_capture(ds: CaptureDataset, path: str | Path) -> None:
    header = {
        "format": CAPTURE_FORMAT,
        "version": VERSION,
        "rows": ds.n,
        "in_dim": ds.X.shape[1],
        "out_dim": ds.Y.shape[1],
        "provenance": ds.provenance,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __header__=_encode(header), X=ds.X, Y=ds.Y)


def load_capture(path: str | Path) -> CaptureDataset:
    with np.load(path) as archive:
        header = _header(archive)
        if header.get("format") != CAPTURE_FORMAT:
            raise InvalidArgument(f"not a capture archive: {header.get('format')!r}")
        if header.get("version") != VERSION:
            raise InvalidArgument(f"unsupported capture format version {header.get('version')}")
        X, Y = archive["X"], archive["Y"]
    if X.shape != (header["rows"], header["in_dim"]) or Y.shape != (header["rows"], header["out_dim"]):
        raise InvalidArgument("capture arrays do not match their header")
    return CaptureDataset(X, Y, header["provenance"])
