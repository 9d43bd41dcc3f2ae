"""PSNR and SSIM on the luminance channel."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .images import PlanarImage, luminance

__all__ = ["Metrics", "psnr", "ssim", "compute_metrics"]

PEAK = 255.0


@dataclass(frozen=True)
class Metrics:
    psnr_db: float
    ssim: float


def psnr(reference, estimate, peak: float = PEAK) -> float:
    """``10 log10(peak^2 / MSE)``; identical inputs give ``inf``."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    mse = float(np.mean((ref - est) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _window_moments(a, b, win):
    wa = sliding_window_view(a, (win, win))
    wb = sliding_window_view(b, (win, win))
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    return mu_a, mu_b, cov


def ssim(reference, estimate, win: int = 8, k1: float = 0.01, k2: float = 0.03,
         peak: float = PEAK) -> float:
    """Mean SSIM over all ``win x win`` windows (uniform weights, unit step)."""
    x = np.asarray(reference, dtype=np.float64)
    y = np.asarray(estimate, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < win:
        raise ValueError(f"image {x.shape} smaller than the {win}x{win} SSIM window")
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu_x, mu_y, cov = _window_moments(x, y, win)
    _, _, var_x = _window_moments(x, x, win)
    _, _, var_y = _window_moments(y, y, win)
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def compute_metrics(reference, estimate) -> Metrics:
    """Metrics on luminance; accepts PlanarImages or bare planes."""
    if isinstance(reference, PlanarImage):
        reference = luminance(reference)
    if isinstance(estimate, PlanarImage):
        estimate = luminance(estimate)
    return Metrics(psnr(reference, estimate), ssim(reference, estimate))
