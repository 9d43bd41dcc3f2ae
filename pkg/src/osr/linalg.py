"""Dense matrix helpers and the seeded random stream used across the package.

Matrices are plain 2D numpy arrays in C (row-major) order. The random
generator is an in-repo counter-based SplitMix64 so that sample streams are
reproducible bit-for-bit independent of the numpy version.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "Rng",
    "as_matrix",
    "matmul",
    "sample_gaussian",
    "spectral_norm_sym",
]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    """Raised when operand dimensions are incompatible."""


def as_matrix(a, dtype=np.float64) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=dtype)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _splitmix(x: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2**64, which is what the mixer wants
    z = x.copy()
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """Counter-based SplitMix64 stream.

    Draw ``k`` of a stream seeded with ``s`` is ``mix(s + (k + 1) * gamma)``,
    so any slice of the stream can be produced in one vectorized call.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def spawn(self, index: int) -> "Rng":
        """Independent child stream keyed on (seed, index)."""
        key = np.array([(self.seed ^ ((int(index) + 1) * 0xD1B54A32D192ED03)) & _MASK64],
                       dtype=np.uint64)
        return Rng(int(_splitmix(key)[0]))

    def next_u64(self, n: int) -> np.ndarray:
        n = int(n)
        k = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _splitmix(np.uint64(self.seed) + k * _GAMMA)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``n`` doubles in ``[low, high)`` with 53 bits of resolution."""
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        # Box-Muller on pairs; 1 - u keeps the log argument in (0, 1]
        n = int(n)
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integers(self, n: int, high: int) -> np.ndarray:
        """``n`` integers in ``[0, high)``."""
        if high < 1:
            raise ValueError("high must be >= 1")
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n: int, m: int) -> np.ndarray:
        """``m`` distinct indices from ``range(n)``."""
        if m > n:
            raise ValueError(f"cannot draw {m} distinct items from {n}")
        return self.permutation(n)[:m]


def sample_gaussian(rng: Rng, n: int, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.zeros(int(n))
    return sigma * rng.normal(n)


def spectral_norm_sym(g, tol: float = 1e-9, max_iter: int = 100_000,
                      return_history: bool = False):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Stops once the Rayleigh quotient changes by less than ``tol`` relative.
    With ``return_history`` the sequence of Rayleigh quotients is returned
    as well.
    """
    g = as_matrix(g)
    if g.shape[0] != g.shape[1]:
        raise ShapeError(f"expected a square matrix, got {g.shape}")
    n = g.shape[0]
    v = 1.0 + 0.5 * Rng(0x5EED).uniform(n)
    v /= np.linalg.norm(v)
    history = []
    rq = float(v @ g @ v)
    history.append(rq)
    for _ in range(max_iter):
        w = g @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            rq = 0.0
            history.append(rq)
            break
        v = w / norm
        new = float(v @ g @ v)
        history.append(new)
        done = abs(new - rq) <= tol * max(abs(new), np.finfo(float).tiny)
        rq = new
        if done:
            break
    rq = max(rq, 0.0)
    if return_history:
        return rq, history
    return rq
