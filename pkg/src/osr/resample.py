"""Separable Catmull-Rom (a = -0.5) bicubic upsampling with mirror boundaries."""

from __future__ import annotations

import numpy as np

from .patching import mirror_index

__all__ = ["cubic_weight", "upsample_matrix", "upsample_bicubic"]


def cubic_weight(x, a: float = -0.5):
    x = np.abs(np.asarray(x, dtype=np.float64))
    w = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    w[near] = ((a + 2) * x[near] - (a + 3)) * x[near] ** 2 + 1
    w[far] = a * (((x[far] - 5) * x[far] + 8) * x[far] - 4)
    return w


def upsample_matrix(n_in: int, factor: int, n_out: int | None = None) -> np.ndarray:
    """``(n_out, n_in)`` interpolation matrix.

    Output sample ``k`` sits at input coordinate ``k / factor``, so input
    sample ``m`` lands exactly on output ``m * factor``, matching decimation
    that keeps indices ``0, factor, 2 * factor, ...``.
    """
    n_out = n_in * factor if n_out is None else n_out
    u = np.arange(n_out) / factor
    base = np.floor(u).astype(np.int64)
    U = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for off in (-1, 0, 1, 2):
        idx = base + off
        np.add.at(U, (rows, mirror_index(idx, n_in)), cubic_weight(u - idx))
    return U


def upsample_bicubic(plane, factor: int, out_shape: tuple[int, int] | None = None) -> np.ndarray:
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    oh, ow = (h * factor, w * factor) if out_shape is None else out_shape
    if factor == 1 and (oh, ow) == (h, w):
        return plane.copy()
    return upsample_matrix(h, factor, oh) @ plane @ upsample_matrix(w, factor, ow).T
