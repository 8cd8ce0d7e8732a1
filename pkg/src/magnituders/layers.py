"""Dense and magnituder layers, layer graphs and a small numpy training loop.

A magnituder (MAG) layer computes ``W f(G x) (+ b)`` where ``G`` is a frozen
random ``m x d`` matrix and only ``W`` (and the optional bias) train. Batches
are row-major: an input batch has shape ``(n, d)``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidArgument, TrainingDiverged
from .numerics import EnsembleKind, RngStream, as_matrix, sample_ensemble

__all__ = [
    "Activation",
    "RELU",
    "IDENTITY",
    "SIGMOID",
    "SOFTMAX",
    "softplus",
    "DenseLayer",
    "MagLayer",
    "FusedLayer",
    "GSource",
    "mag_variance_bound",
    "Head",
    "Network",
    "Adam",
    "SGD",
    "TrainConfig",
    "mag_forward",
    "dense_forward",
    "network_forward",
    "loss_and_gradients",
    "train",
    "param_count",
    "mac_count",
]


# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Activation:
    kind: str
    beta: float = 1.0

    _KINDS = ("relu", "softplus", "identity", "sigmoid", "softmax")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise InvalidArgument(f"unknown activation {self.kind!r}")
        if self.kind == "softplus" and not self.beta > 0:
            raise InvalidArgument("softplus beta must be positive")

    @classmethod
    def parse(cls, value: "str | Activation") -> "Activation":
        if isinstance(value, Activation):
            return value
        text = str(value).strip().lower()
        if text.startswith("softplus"):
            beta = 1.0
            if "(" in text:
                inner = text[text.index("(") + 1 : text.rindex(")")]
                beta = float(inner.split("=")[-1])
            return cls("softplus", beta)
        return cls(text)

    def __str__(self) -> str:
        if self.kind == "softplus":
            return f"softplus({self.beta:g})"
        return self.kind

    def __call__(self, z: np.ndarray) -> np.ndarray:
        k = self.kind
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "identity":
            return z
        if k == "softplus":
            return np.logaddexp(0.0, self.beta * z) / self.beta
        if k == "sigmoid":
            return _sigmoid(z)
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, z: np.ndarray, a: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient with respect to the pre-activation ``z``."""
        k = self.kind
        if k == "relu":
            return upstream * (z > 0)
        if k == "identity":
            return upstream
        if k == "softplus":
            return upstream * _sigmoid(self.beta * z)
        if k == "sigmoid":
            return upstream * a * (1.0 - a)
        return a * (upstream - np.sum(upstream * a, axis=1, keepdims=True))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


RELU = Activation("relu")
IDENTITY = Activation("identity")
SIGMOID = Activation("sigmoid")
SOFTMAX = Activation("softmax")


def softplus(beta: float = 1.0) -> Activation:
    return Activation("softplus", float(beta))


# --------------------------------------------------------------------------
# layers
# --------------------------------------------------------------------------


def _uniform(gen: np.random.Generator, bound: float, shape) -> np.ndarray:
    return gen.uniform(-bound, bound, size=shape)


@dataclass
class DenseLayer:
    """Affine map followed by an element-wise activation: ``f(h W^T + b)``."""

    W: np.ndarray
    b: np.ndarray
    activation: Activation = IDENTITY

    def __post_init__(self) -> None:
        self.W = as_matrix(self.W, "W")
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.b.shape[0] != self.W.shape[0]:
            raise InvalidArgument("bias length must equal the output dimension")
        if not np.all(np.isfinite(self.b)):
            raise InvalidArgument("bias contains non-finite entries")
        self.activation = Activation.parse(self.activation)

    @classmethod
    def init(
        cls, in_dim: int, out_dim: int, activation: Activation | str, rng: RngStream
    ) -> "DenseLayer":
        gen = rng.generator()
        bound = 1.0 / math.sqrt(in_dim)
        return cls(_uniform(gen, bound, (out_dim, in_dim)), _uniform(gen, bound, out_dim), activation)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def params(self) -> list[tuple[str, np.ndarray]]:
        return [("W", self.W), ("b", self.b)]

    def frozen(self) -> list[tuple[str, np.ndarray]]:
        return []

    def macs(self) -> int:
        return self.in_dim * self.out_dim


@dataclass(frozen=True)
class GSource:
    """Where a frozen feature matrix came from, so it can be regenerated."""

    seed: int
    stream_id: int
    path: tuple[int, ...]
    ensemble: EnsembleKind
    rows: int
    cols: int

    def regenerate(self) -> np.ndarray:
        G = sample_ensemble(self.rows, self.cols, self.ensemble, RngStream(self.seed, self.stream_id, self.path))
        return G


def mag_variance_bound(d: int, m: int) -> float:
    """Uniform init bound giving MAG outputs the variance of a fan-in-scaled dense layer."""
    return math.sqrt(2.0 / (m * d))


@dataclass
class MagLayer:
    """Magnituder layer ``W f(G h) (+ b)``; ``G`` never trains."""

    W: np.ndarray
    G: np.ndarray
    f: Activation = RELU
    b: np.ndarray | None = None
    g_source: GSource | None = None

    def __post_init__(self) -> None:
        self.W = as_matrix(self.W, "W")
        self.G = np.array(as_matrix(self.G, "G"), copy=True)
        if self.W.shape[1] != self.G.shape[0]:
            raise InvalidArgument(
                f"W has {self.W.shape[1]} columns but G has {self.G.shape[0]} random features"
            )
        self.f = Activation.parse(self.f)
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
            if self.b.shape[0] != self.W.shape[0]:
                raise InvalidArgument("bias length must equal the output dimension")
        self.G.setflags(write=False)

    @classmethod
    def init(
        cls,
        d: int,
        m: int,
        l: int,
        rng: RngStream,
        *,
        ensemble: EnsembleKind | str = EnsembleKind.BLOCK_ORTHOGONAL,
        bias: bool = False,
        f: Activation | str = RELU,
        init_rng: RngStream | None = None,
        bound: float | None = None,
    ) -> "MagLayer":
        """Draw ``G`` from ``rng`` and ``W``, ``b`` uniform in ``[-bound, bound]``.

        ``bound`` defaults to ``1/sqrt(m)``. Deep stacks should pass
        :func:`mag_variance_bound`, which accounts for ``G`` rows having
        norm about ``sqrt(d)``.
        """
        ensemble = EnsembleKind.parse(ensemble)
        G = sample_ensemble(m, d, ensemble, rng)
        gen = (init_rng if init_rng is not None else rng.child(1)).generator()
        bound = 1.0 / math.sqrt(m) if bound is None else float(bound)
        W = _uniform(gen, bound, (l, m))
        b = _uniform(gen, bound, l) if bias else None
        source = GSource(rng.seed, rng.stream_id, rng.path, ensemble, m, d)
        return cls(W, G, f, b, source)

    @property
    def in_dim(self) -> int:
        return self.G.shape[1]

    @property
    def n_features(self) -> int:
        return self.G.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def features(self, h: np.ndarray) -> np.ndarray:
        return self.f(h @ self.G.T)

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = [("W", self.W)]
        if self.b is not None:
            out.append(("b", self.b))
        return out

    def frozen(self) -> list[tuple[str, np.ndarray]]:
        return [("G", self.G)]

    def macs(self) -> int:
        return self.n_features * self.in_dim + self.out_dim * self.n_features


@dataclass
class FusedLayer:
    """Inference-only result of bundling a MAG layer into the next affine layer.

    Computes ``act(f(h G^T) W_hat^T + x0 W_concat^T + b)``; ``W_concat`` is
    present only when the absorbed layer consumed a skip-concatenation of the
    original network input.
    """

    W_hat: np.ndarray
    b: np.ndarray
    G: np.ndarray
    f: Activation
    activation: Activation
    W_concat: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.W_hat = as_matrix(self.W_hat, "W_hat")
        self.G = as_matrix(self.G, "G")
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.W_hat.shape[1] != self.G.shape[0]:
            raise InvalidArgument("W_hat columns must match the number of random features")
        if self.b.shape[0] != self.W_hat.shape[0]:
            raise InvalidArgument("bias length must equal the output dimension")
        if self.W_concat is not None:
            self.W_concat = as_matrix(self.W_concat, "W_concat")
            if self.W_concat.shape[0] != self.W_hat.shape[0]:
                raise InvalidArgument("W_concat rows must match the output dimension")
        self.f = Activation.parse(self.f)
        self.activation = Activation.parse(self.activation)

    @property
    def in_dim(self) -> int:
        return self.G.shape[1]

    @property
    def n_features(self) -> int:
        return self.G.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W_hat.shape[0]

    @property
    def concat_dim(self) -> int:
        return 0 if self.W_concat is None else self.W_concat.shape[1]

    def forward(self, h: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        z = self.f(h @ self.G.T) @ self.W_hat.T + self.b
        if self.W_concat is not None:
            if x0 is None:
                raise InvalidArgument("fused layer with a concat slice needs the original input")
            z = z + x0 @ self.W_concat.T
        return self.activation(z)

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = [("W_hat", self.W_hat), ("b", self.b)]
        if self.W_concat is not None:
            out.append(("W_concat", self.W_concat))
        return out

    def frozen(self) -> list[tuple[str, np.ndarray]]:
        return [("G", self.G)]

    def macs(self) -> int:
        return self.n_features * self.in_dim + self.out_dim * self.n_features + self.out_dim * self.concat_dim


Layer = Union[DenseLayer, MagLayer, FusedLayer]


def dense_forward(layer: DenseLayer, X) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[1] != layer.in_dim:
        raise InvalidArgument(f"input has {X.shape[1]} columns, layer expects {layer.in_dim}")
    return layer.activation(X @ layer.W.T + layer.b)


def mag_forward(layer: MagLayer, X) -> np.ndarray:
    """``f(X G^T) W^T (+ b)`` for a batch ``X`` of shape ``(n, d)``."""
    X = as_matrix(X, "X")
    if X.shape[1] != layer.in_dim:
        raise InvalidArgument(f"input has {X.shape[1]} columns, layer expects {layer.in_dim}")
    out = layer.features(X) @ layer.W.T
    if layer.b is not None:
        out = out + layer.b
    return out


# --------------------------------------------------------------------------
# networks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Head:
    """Named column slice ``[start, stop)`` of the final layer output."""

    name: str
    start: int
    stop: int
    activation: Activation = IDENTITY

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass
class Network:
    """Sequential layer stack with optional skip-concatenation of the input.

    ``skips`` holds the indices of layers whose input is ``[x0, h]``: the
    original network input ``x0`` followed by the previous layer's output.
    """

    layers: list[Layer]
    input_dim: int
    skips: frozenset[int] = frozenset()
    heads: tuple[Head, ...] = ()
    fused: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.layers = list(self.layers)
        self.skips = frozenset(int(k) for k in self.skips)
        if not self.layers:
            raise InvalidArgument("network needs at least one layer")
        self.fused = self.fused or any(isinstance(l, FusedLayer) for l in self.layers)
        for k in self.skips:
            if not 1 <= k < len(self.layers):
                raise InvalidArgument(f"skip index {k} out of range")
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            expected = width + (self.input_dim if i in self.skips else 0)
            if isinstance(layer, FusedLayer):
                if i in self.skips:
                    raise InvalidArgument("fused layers carry their own concat slice")
                if layer.concat_dim not in (0, self.input_dim):
                    raise InvalidArgument("fused concat slice must match the network input")
            if layer.in_dim != expected:
                raise InvalidArgument(
                    f"layer {i} expects input dim {layer.in_dim}, graph provides {expected}"
                )
            width = layer.out_dim
        if not self.heads:
            self.heads = (Head("out", 0, width),)
        self.heads = tuple(self.heads)
        for head in self.heads:
            if not 0 <= head.start < head.stop <= width:
                raise InvalidArgument(f"head {head.name!r} slice outside output width {width}")

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def trainable(self) -> list[tuple[int, str, np.ndarray]]:
        return [(i, name, arr) for i, layer in enumerate(self.layers) for name, arr in layer.params()]

    def head(self, name: str) -> Head:
        for head in self.heads:
            if head.name == name:
                return head
        raise InvalidArgument(f"no head named {name!r}")

    def forward_raw(self, X) -> np.ndarray:
        """Final layer output before head activations."""
        X = as_matrix(X, "X")
        if X.shape[1] != self.input_dim:
            raise InvalidArgument(f"input has {X.shape[1]} columns, network expects {self.input_dim}")
        h = X
        for i, layer in enumerate(self.layers):
            if i in self.skips:
                h = np.concatenate([X, h], axis=1)
            if isinstance(layer, DenseLayer):
                h = layer.activation(h @ layer.W.T + layer.b)
            elif isinstance(layer, MagLayer):
                h = layer.features(h) @ layer.W.T + (0.0 if layer.b is None else layer.b)
            else:
                h = layer.forward(h, X)
        return h

    def forward(self, X) -> dict[str, np.ndarray]:
        raw = self.forward_raw(X)
        return {hd.name: hd.activation(raw[:, hd.start : hd.stop]) for hd in self.heads}

    def layer_input(self, X, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Input and output of layer ``index`` for the batch ``X``."""
        if not 0 <= index < len(self.layers):
            raise InvalidArgument(f"layer index {index} out of range")
        X = as_matrix(X, "X")
        if X.shape[1] != self.input_dim:
            raise InvalidArgument(f"input has {X.shape[1]} columns, network expects {self.input_dim}")
        sub = Network(self.layers[:index], self.input_dim, {k for k in self.skips if k < index}) if index else None
        h = X if sub is None else sub.forward_raw(X)
        if index in self.skips:
            h = np.concatenate([X, h], axis=1)
        layer = self.layers[index]
        if isinstance(layer, DenseLayer):
            out = dense_forward(layer, h)
        elif isinstance(layer, MagLayer):
            out = mag_forward(layer, h)
        else:
            out = layer.forward(h, X)
        return h, out


def network_forward(net: Network, X) -> dict[str, np.ndarray]:
    return net.forward(X)


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------

Targets = Union[np.ndarray, Mapping[str, np.ndarray]]


def _normalise_targets(net: Network, targets: Targets) -> dict[str, np.ndarray]:
    if isinstance(targets, Mapping):
        out = {}
        for name, arr in targets.items():
            head = net.head(name)
            arr = as_matrix(arr, f"target {name!r}")
            if arr.shape[1] != head.width:
                raise InvalidArgument(f"target {name!r} has {arr.shape[1]} columns, head has {head.width}")
            out[name] = arr
        if not out:
            raise InvalidArgument("no targets given")
        return out
    arr = as_matrix(targets, "targets")
    if len(net.heads) == 1:
        return _normalise_targets(net, {net.heads[0].name: arr})
    total = sum(h.width for h in net.heads)
    if arr.shape[1] != total:
        raise InvalidArgument("a single target matrix must cover every head in order")
    out, col = {}, 0
    for head in net.heads:
        out[head.name] = arr[:, col : col + head.width]
        col += head.width
    return _normalise_targets(net, out)


def loss_and_gradients(net: Network, X, targets: Targets) -> tuple[float, list[np.ndarray]]:
    """MSE loss and its gradients, aligned with ``net.trainable()``.

    The loss is the sum over targeted heads of the mean squared error of that
    head (mean over rows and columns).
    """
    if net.fused:
        raise InvalidArgument("fused networks are inference-only and cannot be trained")
    X = as_matrix(X, "X")
    if X.shape[1] != net.input_dim:
        raise InvalidArgument(f"input has {X.shape[1]} columns, network expects {net.input_dim}")
    tgt = _normalise_targets(net, targets)
    n = X.shape[0]
    for name, arr in tgt.items():
        if arr.shape[0] != n:
            raise InvalidArgument(f"target {name!r} has {arr.shape[0]} rows, inputs have {n}")

    caches = []
    h = X
    for i, layer in enumerate(net.layers):
        if i in net.skips:
            h = np.concatenate([X, h], axis=1)
        if isinstance(layer, DenseLayer):
            z = h @ layer.W.T + layer.b
            a = layer.activation(z)
            caches.append((h, z, a))
        else:
            p = h @ layer.G.T
            phi = layer.f(p)
            a = phi @ layer.W.T
            if layer.b is not None:
                a = a + layer.b
            caches.append((h, p, phi))
        h = a

    raw = h
    grad_raw = np.zeros_like(raw)
    loss = 0.0
    for head in net.heads:
        if head.name not in tgt:
            continue
        z = raw[:, head.start : head.stop]
        y = head.activation(z)
        diff = y - tgt[head.name]
        size = diff.size
        loss += float(np.sum(diff * diff) / size)
        grad_raw[:, head.start : head.stop] += head.activation.backward(z, y, 2.0 * diff / size)

    grads_by_layer: list[list[np.ndarray]] = [[] for _ in net.layers]
    g = grad_raw
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if isinstance(layer, DenseLayer):
            hin, z, a = caches[i]
            dz = layer.activation.backward(z, a, g)
            grads_by_layer[i] = [dz.T @ hin, dz.sum(axis=0)]
            g = dz @ layer.W
        else:
            hin, p, phi = caches[i]
            gl = [g.T @ phi]
            if layer.b is not None:
                gl.append(g.sum(axis=0))
            grads_by_layer[i] = gl
            dphi = g @ layer.W
            dp = layer.f.backward(p, phi, dphi)
            g = dp @ layer.G
        if i in net.skips:
            g = g[:, net.input_dim :]
    grads = [gr for layer_grads in grads_by_layer for gr in layer_grads]
    return loss, grads


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class SGD:
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    rng: RngStream
    optimizer: Adam | SGD = Adam()
    loss: str = "mse"

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be positive")
        if self.loss != "mse":
            raise InvalidArgument("only the mse loss is supported")


class AdamState:
    """Adam moments for a list of parameter arrays, updated in place."""

    def __init__(self, params: Sequence[np.ndarray], cfg: Adam, lr: float) -> None:
        self.cfg, self.lr, self.t = cfg, lr, 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train(net: Network, inputs, targets: Targets, cfg: TrainConfig) -> tuple[Network, list[float]]:
    """Train a copy of ``net``; returns it with the per-epoch mean loss.

    Only :meth:`Network.trainable` arrays change; MAG feature matrices stay
    byte-identical. Batches are drawn from a per-epoch permutation of the rows
    using ``cfg.rng``.
    """
    if net.fused:
        raise InvalidArgument("fused networks are inference-only and cannot be trained")
    X = as_matrix(inputs, "inputs")
    tgt = _normalise_targets(net, targets)
    n = X.shape[0]
    for name, arr in tgt.items():
        if arr.shape[0] != n:
            raise InvalidArgument(f"target {name!r} has {arr.shape[0]} rows, inputs have {n}")
    trained = net.copy()
    params = [arr for _, _, arr in trained.trainable()]
    if isinstance(cfg.optimizer, Adam):
        state = AdamState(params, cfg.optimizer, cfg.learning_rate)
        update = state.step
    else:
        def update(ps, gs):
            for p, g in zip(ps, gs):
                p -= cfg.learning_rate * g

    gen = cfg.rng.generator()
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        order = gen.permutation(n) if cfg.batch_size < n else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch_t = {k: v[idx] for k, v in tgt.items()}
            loss, grads = loss_and_gradients(trained, X[idx], batch_t)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting at row {start}")
            total += loss * len(idx)
            update(params, grads)
        trace.append(total / n)
    return trained, trace


# --------------------------------------------------------------------------
# accounting
# --------------------------------------------------------------------------


def param_count(net: Network) -> tuple[int, int]:
    """``(trainable, frozen)`` scalar counts.

    Fused layers report their stored matrices as trainable-kind parameters
    even though fused networks reject training; their ``G`` stays frozen.
    """
    trainable = sum(arr.size for layer in net.layers for _, arr in layer.params())
    frozen = sum(arr.size for layer in net.layers for _, arr in layer.frozen())
    return int(trainable), int(frozen)


def mac_count(net: Network) -> int:
    """Multiply-accumulates of one forward pass per input row (weights only)."""
    return int(sum(layer.macs() for layer in net.layers))
