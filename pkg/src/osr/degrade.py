"""Forward degradation models built on Gaussian blur."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special

from .images import PlanarImage
from .linalg import Rng, sample_gaussian

__all__ = [
    "GaussianKernel",
    "DegradationSpec",
    "KERNEL_KINDS",
    "gaussian_taps_1d",
    "make_gaussian_kernel",
    "identity_kernel",
    "convolve2d_same",
    "blur",
    "decimate",
    "degrade",
    "degrade_plane",
    "compose_sigma",
    "residual_sigma",
    "residual_kernel",
]


@dataclass(frozen=True)
class GaussianKernel:
    size: int
    sigma: float
    taps: np.ndarray

    @property
    def radius(self) -> int:
        return self.size // 2


@dataclass(frozen=True)
class DegradationSpec:
    kernel: GaussianKernel
    noise_sigma: float = 0.0
    decimation: int = 1

    def __post_init__(self):
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @classmethod
    def gaussian(cls, sigma: float, noise_sigma: float = 0.0, decimation: int = 1,
                 size: int = 25) -> "DegradationSpec":
        kernel = make_gaussian_kernel(size, sigma) if sigma > 0 else identity_kernel()
        return cls(kernel, noise_sigma, decimation)

    def to_dict(self) -> dict:
        return {"kernel_size": self.kernel.size, "blur_sigma": self.kernel.sigma,
                "noise_sigma": self.noise_sigma, "decimation": self.decimation}


KERNEL_KINDS = ("discrete", "sampled")


def gaussian_taps_1d(size: int, sigma: float, kind: str = "discrete") -> np.ndarray:
    """Unnormalized 1D Gaussian taps on ``-(size//2) .. size//2``.

    ``discrete`` is the discrete analogue ``exp(-t) I_n(t)`` with ``t = sigma**2``,
    whose variances add exactly under convolution. ``sampled`` evaluates
    ``exp(-x**2 / (2 sigma**2))`` at the integer offsets.
    """
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    if kind == "discrete":
        taps = special.ive(np.abs(x), sigma * sigma)
        if np.all(np.isfinite(taps)) and taps.sum() > 0:
            return taps
        # ive overflows its argument range for very wide kernels; both kinds agree there
        kind = "sampled"
    if kind == "sampled":
        return np.exp(-(x * x) / (2.0 * sigma * sigma))
    raise ValueError(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")


def make_gaussian_kernel(size: int, sigma: float, kind: str = "discrete") -> GaussianKernel:
    """Separable isotropic Gaussian truncated to ``size x size``, renormalized to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    g = gaussian_taps_1d(size, sigma, kind)
    taps = np.outer(g, g)
    taps /= taps.sum()
    return GaussianKernel(size, float(sigma), taps)


def identity_kernel() -> GaussianKernel:
    return GaussianKernel(1, 0.0, np.ones((1, 1)))


def convolve2d_same(plane, k) -> np.ndarray:
    """Same-size 2D convolution with symmetric (edge-repeating) mirror padding."""
    taps = k.taps if isinstance(k, GaussianKernel) else np.asarray(k, dtype=np.float64)
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or taps.ndim != 2:
        raise ValueError("plane and kernel must be 2D")
    if plane.shape[0] < taps.shape[0] or plane.shape[1] < taps.shape[1]:
        raise ValueError(f"plane {plane.shape} is smaller than kernel {taps.shape}")
    # scipy's "reflect" mode is the d c b a | a b c d | d c b a extension
    return ndimage.convolve(plane, taps, mode="reflect")


def blur(plane, sigma: float, size: int = 25) -> np.ndarray:
    if sigma == 0:
        return np.array(plane, dtype=np.float64)
    return convolve2d_same(plane, make_gaussian_kernel(size, sigma))


def decimate(plane: np.ndarray, factor: int) -> np.ndarray:
    """Keep every ``factor``-th row and column starting at index 0."""
    return plane[::factor, ::factor].copy()


def degrade_plane(plane, spec: DegradationSpec, rng: Rng) -> np.ndarray:
    out = convolve2d_same(plane, spec.kernel) if spec.kernel.size > 1 else np.array(plane, float)
    if spec.decimation > 1:
        out = decimate(out, spec.decimation)
    if spec.noise_sigma > 0:
        out = out + sample_gaussian(rng, out.size, spec.noise_sigma).reshape(out.shape)
    return out


def degrade(img: PlanarImage, spec: DegradationSpec, rng: Rng) -> PlanarImage:
    """Blur every channel, decimate, then add white Gaussian noise.

    Noise is drawn channel by channel in row-major order from ``rng``.
    """
    planes = [degrade_plane(p, spec, rng) for p in img.planes]
    return PlanarImage(np.stack(planes), img.colorspace)


def compose_sigma(sigma_a: float, sigma_b: float) -> float:
    """Width of the Gaussian equal to two Gaussians applied in sequence."""
    if sigma_a < 0 or sigma_b < 0:
        raise ValueError("sigmas must be nonnegative")
    return math.hypot(sigma_a, sigma_b)


def residual_sigma(sigma_from: float, sigma_to: float) -> float:
    if not sigma_to > sigma_from >= 0:
        raise ValueError(
            f"residual blur needs sigma_to > sigma_from >= 0, got {sigma_from}, {sigma_to}")
    return math.sqrt(sigma_to * sigma_to - sigma_from * sigma_from)


def residual_kernel(sigma_s: float, sigma_t: float, size: int = 25) -> GaussianKernel:
    """Kernel taking a ``sigma_s`` blur to a ``sigma_t`` blur."""
    return make_gaussian_kernel(size, residual_sigma(sigma_s, sigma_t))
