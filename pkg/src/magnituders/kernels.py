"""Monte-Carlo estimators of the magnituder and SNNK kernels.

The magnituder kernel is ``K(u, v) = sum_i u_i E[f_i(||v|| g)]`` with
``g ~ N(0, 1)``. Its random-feature estimator pairs coordinate ``i`` of ``u``
with the features ``g_j`` for which ``j mod d == i`` and averages over them;
with ``m == d`` this is ``sum_i u_i f_i(v . g_i)``.

The SNNK kernel is ``E[Phi(u . g) Psi(v . g)]`` estimated by the feature
average ``(1/m) sum_j Phi(u . g_j) Psi(v . g_j)``. ``Phi`` and ``Psi`` may be
tuples of functions, whose products are summed (``(sin, cos)`` pairs give the
Gaussian kernel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .numerics import EnsembleKind, RngStream, sample_ensemble, sample_ensemble_batch

__all__ = [
    "ScalarFunction",
    "RELU",
    "SIN",
    "COS",
    "SIGN",
    "exp_fn",
    "softplus_fn",
    "KernelEstimator",
    "VarianceReport",
    "kernel_mag_estimate",
    "kernel_mag_exact",
    "kernel_snnk_estimate",
    "kernel_snnk_exact",
    "estimator_variance",
    "jackknife_variance",
]


@dataclass(frozen=True)
class ScalarFunction:
    kind: str
    c: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("relu", "exp", "softplus", "sin", "cos", "sign"):
            raise InvalidArgument(f"unknown scalar function {self.kind!r}")
        if self.kind == "softplus" and not self.beta > 0:
            raise InvalidArgument("softplus beta must be positive")

    @classmethod
    def parse(cls, text: "str | ScalarFunction") -> "ScalarFunction":
        if isinstance(text, ScalarFunction):
            return text
        text = str(text).strip().lower()
        if "(" in text:
            name, arg = text[: text.index("(")], float(text[text.index("(") + 1 : text.rindex(")")])
            if name == "exp":
                return cls("exp", c=arg)
            if name == "softplus":
                return cls("softplus", beta=arg)
            raise InvalidArgument(f"{name} takes no parameter")
        return cls(text)

    def __str__(self) -> str:
        if self.kind == "exp":
            return f"exp({self.c:g})"
        if self.kind == "softplus":
            return f"softplus({self.beta:g})"
        return self.kind

    def __call__(self, z):
        k = self.kind
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "exp":
            return np.exp(self.c * z)
        if k == "softplus":
            return np.logaddexp(0.0, self.beta * z) / self.beta
        if k == "sin":
            return np.sin(z)
        if k == "cos":
            return np.cos(z)
        return np.sign(z)

    def gaussian_mean(self, a: float) -> float:
        """``E[f(a g)]`` for ``g ~ N(0, 1)``, where known in closed form."""
        k = self.kind
        if k == "relu":
            return a / math.sqrt(2.0 * math.pi)
        if k == "exp":
            return math.exp(0.5 * (self.c * a) ** 2)
        if k in ("sin", "sign"):
            return 0.0
        if k == "cos":
            return math.exp(-0.5 * a * a)
        raise InvalidArgument(f"no closed-form Gaussian expectation for {self}")


RELU = ScalarFunction("relu")
SIN = ScalarFunction("sin")
COS = ScalarFunction("cos")
SIGN = ScalarFunction("sign")


def exp_fn(c: float = 1.0) -> ScalarFunction:
    return ScalarFunction("exp", c=float(c))


def softplus_fn(beta: float = 1.0) -> ScalarFunction:
    return ScalarFunction("softplus", beta=float(beta))


@dataclass(frozen=True)
class KernelEstimator:
    """Random-feature configuration.

    ``functions`` are the per-coordinate maps of the magnituder kernel (one
    entry is broadcast to every coordinate); ``phi``/``psi`` are the two
    towers of the SNNK kernel.
    """

    ensemble: EnsembleKind
    m: int
    rng: RngStream
    functions: tuple[ScalarFunction, ...] = ()
    phi: tuple[ScalarFunction, ...] = ()
    psi: tuple[ScalarFunction, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ensemble", EnsembleKind.parse(self.ensemble))
        if self.m < 1:
            raise InvalidArgument("m must be >= 1")
        for name in ("functions", "phi", "psi"):
            value = getattr(self, name)
            if isinstance(value, (ScalarFunction, str)):
                value = (value,)
            object.__setattr__(self, name, tuple(ScalarFunction.parse(f) for f in value))
        if not self.functions and not self.phi:
            raise InvalidArgument("estimator needs at least one function")
        if len(self.phi) != len(self.psi):
            raise InvalidArgument("phi and psi must have the same number of components")

    def with_rng(self, rng: RngStream) -> "KernelEstimator":
        return KernelEstimator(self.ensemble, self.m, rng, self.functions, self.phi, self.psi)

    def with_m(self, m: int) -> "KernelEstimator":
        return KernelEstimator(self.ensemble, m, self.rng, self.functions, self.phi, self.psi)


def _vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgument(f"{name} must be a vector or a 1 x d matrix")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def _coordinate_functions(functions: tuple[ScalarFunction, ...], d: int) -> tuple[ScalarFunction, ...]:
    if len(functions) == 1:
        return functions * d
    if len(functions) != d:
        raise InvalidArgument(f"need 1 or {d} functions, got {len(functions)}")
    return functions


def _mag_estimates(u: np.ndarray, v: np.ndarray, fns, G: np.ndarray) -> np.ndarray:
    # G: (..., m, d) -> estimates with shape G.shape[:-2]
    d = u.size
    m = G.shape[-2]
    proj = G @ v
    coord = np.arange(m) % d
    vals = np.empty_like(proj)
    for f in set(fns):
        cols = np.array([fns[i] == f for i in coord])
        vals[..., cols] = f(proj[..., cols])
    counts = np.bincount(coord, minlength=d).astype(np.float64)
    weights = u[coord] / counts[coord]
    return vals @ weights


def _check_mag(u, v, est: KernelEstimator):
    u = _vector(u, "u")
    v = _vector(v, "v")
    if u.size != v.size:
        raise InvalidArgument(f"u has dimension {u.size}, v has {v.size}")
    if not est.functions:
        raise InvalidArgument("estimator has no magnituder functions")
    if est.m < u.size:
        raise InvalidArgument(f"need m >= d features to cover every coordinate (m={est.m}, d={u.size})")
    return u, v, _coordinate_functions(est.functions, u.size)


def kernel_mag_estimate(u, v, est: KernelEstimator) -> float:
    u, v, fns = _check_mag(u, v, est)
    G = sample_ensemble(est.m, u.size, est.ensemble, est.rng)
    return float(_mag_estimates(u, v, fns, G))


def kernel_mag_exact(u, v, functions) -> float:
    u = _vector(u, "u")
    v = _vector(v, "v")
    if u.size != v.size:
        raise InvalidArgument(f"u has dimension {u.size}, v has {v.size}")
    if isinstance(functions, (ScalarFunction, str)):
        functions = (functions,)
    fns = _coordinate_functions(tuple(ScalarFunction.parse(f) for f in functions), u.size)
    a = float(np.linalg.norm(v))
    return float(sum(ui * f.gaussian_mean(a) for ui, f in zip(u, fns)))


def _snnk_values(a: np.ndarray, b: np.ndarray, est: KernelEstimator) -> np.ndarray:
    total = np.zeros_like(a)
    for phi, psi in zip(est.phi, est.psi):
        total += phi(a) * psi(b)
    return total.mean(axis=-1)


def _check_snnk(u, v, est: KernelEstimator):
    u = _vector(u, "u")
    v = _vector(v, "v")
    if u.size != v.size:
        raise InvalidArgument(f"u has dimension {u.size}, v has {v.size}")
    if not est.phi:
        raise InvalidArgument("estimator has no SNNK towers")
    return u, v


def kernel_snnk_estimate(u, v, est: KernelEstimator) -> float:
    u, v = _check_snnk(u, v, est)
    G = sample_ensemble(est.m, u.size, est.ensemble, est.rng)
    return float(_snnk_values(G @ u, G @ v, est))


def kernel_snnk_exact(u, v, phi, psi) -> float:
    """Closed form for the trigonometric and exponential tower pairs.

    ``(sin, cos)`` with ``(sin, cos)`` gives ``exp(-||u - v||^2 / 2)``;
    ``exp(c)`` with ``exp(c)`` gives ``exp(c^2 ||u + v||^2 / 2)``.
    """
    u = _vector(u, "u")
    v = _vector(v, "v")
    phi = tuple(ScalarFunction.parse(f) for f in (phi if isinstance(phi, (tuple, list)) else (phi,)))
    psi = tuple(ScalarFunction.parse(f) for f in (psi if isinstance(psi, (tuple, list)) else (psi,)))
    kinds = (tuple(f.kind for f in phi), tuple(f.kind for f in psi))
    if kinds == (("sin", "cos"), ("sin", "cos")):
        return math.exp(-0.5 * float(np.sum((u - v) ** 2)))
    if kinds == (("exp",), ("exp",)) and phi[0].c == psi[0].c:
        c = phi[0].c
        return math.exp(0.5 * c * c * float(np.sum((u + v) ** 2)))
    raise InvalidArgument("no closed form for this tower pair")


@dataclass(frozen=True)
class VarianceReport:
    ensemble: EnsembleKind
    m: int
    trials: int
    variance: float
    variance_se: float
    mean: float
    mean_se: float


def jackknife_variance(x: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its leave-one-out jackknife standard error."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 3:
        raise InvalidArgument("need at least 3 samples")
    c = x - x.mean()
    s1, s2 = c.sum(), np.sum(c * c)
    loo_mean = (s1 - c) / (n - 1)
    loo_var = (s2 - c * c - (n - 1) * loo_mean**2) / (n - 2)
    var = s2 / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo_var - loo_var.mean()) ** 2)))
    return float(var), se


def estimator_variance(
    u, v, est: KernelEstimator, trials: int, *, kernel: str = "mag", chunk: int = 2000
) -> VarianceReport:
    """Resample the ensemble ``trials`` times and summarise the estimates.

    Chunk ``k`` of ``chunk`` trials draws from ``est.rng.child(k)``, so the
    report depends only on the inputs, not on how chunks are scheduled.
    """
    if trials < 100:
        raise InvalidArgument("estimator_variance needs at least 100 trials")
    if kernel == "mag":
        u, v, fns = _check_mag(u, v, est)
    elif kernel == "snnk":
        u, v = _check_snnk(u, v, est)
    else:
        raise InvalidArgument(f"unknown kernel {kernel!r}")
    d = u.size
    values = np.empty(trials)
    for k, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        G = sample_ensemble_batch(size, est.m, d, est.ensemble, est.rng.child(k).generator())
        if kernel == "mag":
            values[start : start + size] = _mag_estimates(u, v, fns, G)
        else:
            values[start : start + size] = _snnk_values(G @ u, G @ v, est)
    var, se = jackknife_variance(values)
    mean = float(values.mean())
    return VarianceReport(est.ensemble, est.m, trials, var, se, mean, math.sqrt(var / trials))
