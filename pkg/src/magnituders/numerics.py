"""Seeded random matrices and least-squares solves.

Matrices are plain 2-D ``float64`` numpy arrays. Every sampler takes an
:class:`RngStream`, so a draw is a pure function of ``(seed, stream_id, path)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "EnsembleKind",
    "RngStream",
    "as_matrix",
    "sample_gaussian_matrix",
    "sample_orthogonal_matrix",
    "sample_ensemble",
    "sample_ensemble_batch",
    "orthogonalize_blocks",
    "solve_least_squares",
    "LeastSquaresInfo",
]


class EnsembleKind(str, enum.Enum):
    IID_GAUSSIAN = "iid"
    BLOCK_ORTHOGONAL = "orthogonal"

    @classmethod
    def parse(cls, value: "str | EnsembleKind") -> "EnsembleKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "iid": cls.IID_GAUSSIAN,
            "iid_gaussian": cls.IID_GAUSSIAN,
            "gaussian": cls.IID_GAUSSIAN,
            "orthogonal": cls.BLOCK_ORTHOGONAL,
            "ort": cls.BLOCK_ORTHOGONAL,
            "orf": cls.BLOCK_ORTHOGONAL,
            "block_orthogonal": cls.BLOCK_ORTHOGONAL,
        }
        if key not in aliases:
            raise InvalidArgument(f"unknown ensemble kind {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by a seed and a substream id.

    ``path`` extends the substream id hierarchically (see :meth:`child`), so
    nested experiment loops can carve out independent streams without
    coordinating integer ranges.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0 or any(int(p) < 0 for p in self.path):
            raise InvalidArgument("stream ids must be non-negative")

    def generator(self) -> np.random.Generator:
        """A fresh generator; two calls return identical sequences."""
        key = (int(self.stream_id),) + tuple(int(p) for p in self.path)
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidArgument(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def _check_dims(**dims: int) -> None:
    for key, value in dims.items():
        if int(value) < 1:
            raise InvalidArgument(f"{key} must be >= 1, got {value}")


def sample_gaussian_matrix(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """Matrix of iid standard-normal entries."""
    _check_dims(rows=rows, cols=cols)
    return rng.generator().standard_normal((rows, cols))


def orthogonalize_blocks(G: np.ndarray, d: int | None = None) -> np.ndarray:
    """Gram-Schmidt each block of ``d`` rows, keeping every row's length.

    Works on ``(m, d)`` or stacked ``(..., m, d)`` arrays. Applied to an iid
    Gaussian matrix the result is a block-orthogonal ensemble: directions
    within a block become a uniformly random orthonormal frame and the kept
    row lengths are independent chi(d) draws, so each row stays marginally
    ``N(0, I_d)``. Row ``k`` depends only on rows ``<= k`` of its block.
    """
    G = np.asarray(G, dtype=np.float64)
    m, dim = G.shape[-2:]
    d = dim if d is None else d
    out = np.empty_like(G)
    for start in range(0, m, d):
        block = G[..., start : start + d, :]
        q, r = np.linalg.qr(np.swapaxes(block, -1, -2))
        signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
        signs[signs == 0] = 1.0
        directions = np.swapaxes(q * signs[..., None, :], -1, -2)
        out[..., start : start + d, :] = directions * np.linalg.norm(block, axis=-1, keepdims=True)
    return out


def sample_orthogonal_matrix(m: int, d: int, rng: RngStream) -> np.ndarray:
    """Block-orthogonal random matrix of shape ``(m, d)``.

    Rows come in independent blocks of ``d``; rows within a block are exactly
    orthogonal and have chi(d) lengths, so every row is marginally
    ``N(0, I_d)``. The last block holds ``m mod d`` rows when ``d`` does not
    divide ``m``.

    The matrix is :func:`orthogonalize_blocks` applied to
    ``sample_gaussian_matrix(m, d, rng)``: for a fixed ``rng`` the result for
    ``m`` is the leading-row prefix of the result for any larger ``m``, and
    it is coupled row by row to the iid draw from the same stream.
    """
    return orthogonalize_blocks(sample_gaussian_matrix(m, d, rng))


def sample_ensemble(m: int, d: int, ensemble: EnsembleKind | str, rng: RngStream) -> np.ndarray:
    ensemble = EnsembleKind.parse(ensemble)
    if ensemble is EnsembleKind.IID_GAUSSIAN:
        return sample_gaussian_matrix(m, d, rng)
    return sample_orthogonal_matrix(m, d, rng)


def sample_ensemble_batch(
    trials: int, m: int, d: int, ensemble: EnsembleKind, gen: np.random.Generator
) -> np.ndarray:
    """``trials`` independent ensembles stacked as ``(trials, m, d)``."""
    G = gen.standard_normal((trials, m, d))
    if ensemble is EnsembleKind.BLOCK_ORTHOGONAL:
        G = orthogonalize_blocks(G)
    return G


@dataclass(frozen=True)
class LeastSquaresInfo:
    rank: int
    rank_deficient: bool
    singular_values: np.ndarray


def solve_least_squares(
    A, B, ridge: float = 0.0, *, return_info: bool = False
) -> np.ndarray | tuple[np.ndarray, LeastSquaresInfo]:
    """Minimise ``||A X - B||_F^2 + ridge * ||X||_F^2`` over ``X``.

    Solved through a thin SVD of ``A``; with ``ridge == 0`` singular values
    below ``max(n, m) * eps * s_max`` are dropped, which yields the
    Moore-Penrose minimum-norm solution for rank-deficient ``A``.

    Parameters
    ----------
    A : array_like, shape (n, m)
    B : array_like, shape (n, l)
    ridge : float
        Non-negative Tikhonov weight.
    return_info : bool
        Also return a :class:`LeastSquaresInfo` with the numerical rank.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise InvalidArgument(f"row mismatch: A has {A.shape[0]}, B has {B.shape[0]}")
    ridge = float(ridge)
    if not np.isfinite(ridge) or ridge < 0:
        raise InvalidArgument("ridge must be a finite non-negative number")

    u, s, vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    rank = int(keep.sum())
    if ridge > 0:
        scale = s / (s * s + ridge)
    else:
        scale = np.zeros_like(s)
        scale[keep] = 1.0 / s[keep]
    X = vt.T @ (scale[:, None] * (u.T @ B))
    if not return_info:
        return X
    return X, LeastSquaresInfo(rank=rank, rank_deficient=rank < A.shape[1], singular_values=s)
