"""Procedural targets and metrics for the toy implicit-representation tasks."""

from __future__ import annotations

import math

import numpy as np

PSNR_CAP_DB = 100.0


def grid_coords(size: int) -> np.ndarray:
    """Pixel-centre coordinates in ``[-1, 1]^2``, row-major, shape ``(size*size, 2)``."""
    t = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    yy, xx = np.meshgrid(t, t, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def positional_encoding(coords: np.ndarray, n_freqs: int = 15, dim: int | None = 60, include_input: bool = False) -> np.ndarray:
    """Sinusoidal encoding with frequencies ``2^k``, ``k = 0 .. n_freqs-1``.

    Columns per frequency are ``sin`` of every axis then ``cos`` of every
    axis; the result is truncated to ``dim`` columns when given.
    """
    coords = np.asarray(coords, dtype=np.float64)
    parts = [coords] if include_input else []
    for k in range(n_freqs):
        scaled = coords * (2.0**k)
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    enc = np.concatenate(parts, axis=1)
    if dim is not None:
        if dim > enc.shape[1]:
            raise ValueError(f"encoding has only {enc.shape[1]} columns, asked for {dim}")
        enc = enc[:, :dim]
    return enc


def procedural_image(size: int = 64, checks: int = 8) -> np.ndarray:
    """Checkerboard blended with colour gradients, values in ``[0, 1]``, shape ``(size*size, 3)``."""
    xy = (grid_coords(size) + 1.0) / 2.0
    x, y = xy[:, 0], xy[:, 1]
    board = ((np.floor(x * checks) + np.floor(y * checks)) % 2).astype(np.float64)
    r = 0.6 * board + 0.4 * x
    g = 0.3 + 0.4 * y + 0.2 * board * (1.0 - x)
    b = 0.5 + 0.4 * np.sin(math.pi * (x + y)) * (0.5 - 0.5 * board) + 0.1 * board
    return np.clip(np.stack([r, g, b], axis=1), 0.0, 1.0)


def sdf_circle(p: np.ndarray, centre=(-0.35, 0.1), radius: float = 0.35) -> np.ndarray:
    return np.linalg.norm(p - np.asarray(centre), axis=1) - radius


def sdf_box(p: np.ndarray, centre=(0.3, -0.2), half=(0.3, 0.2)) -> np.ndarray:
    q = np.abs(p - np.asarray(centre)) - np.asarray(half)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(np.max(q, axis=1), 0.0)
    return outside + inside


def composite_sdf(p: np.ndarray) -> np.ndarray:
    """Exact signed distance to the union of a circle and a box."""
    return np.minimum(sdf_circle(p), sdf_box(p))


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """PSNR in dB; identical inputs return :data:`PSNR_CAP_DB`."""
    mse = float(np.mean((np.asarray(pred) - np.asarray(target)) ** 2))
    if mse <= peak * peak * 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * math.log10(peak * peak / mse)


def sdf_errors(pred: np.ndarray, truth: np.ndarray, surface_band: float) -> tuple[float, float]:
    """Mean absolute SDF error overall and over points with ``|truth| <= surface_band``."""
    err = np.abs(np.asarray(pred).reshape(-1) - np.asarray(truth).reshape(-1))
    surf = np.abs(np.asarray(truth).reshape(-1)) <= surface_band
    return float(err.mean()), float(err[surf].mean())
