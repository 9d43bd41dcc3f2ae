"""Sparse coding by ISTA, plus the checks tying it to the RNN cell.

The cost is ``f(z) = 0.5 ||y - D z||^2 + lam ||z||_1``. ISTA minimizes the
majorizer ``Q(z, z_prev)`` at each step, which with ``c > ||D^T D||_2`` gives
a monotonically decreasing cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import Rng, ShapeError, as_matrix, spectral_norm_sym

__all__ = [
    "SparseProblem",
    "IstaState",
    "soft_threshold",
    "soft_threshold_pos",
    "hard_threshold",
    "relu",
    "relu_soft_identity_check",
    "cost_f",
    "surrogate_Q",
    "ista_step",
    "ista_solve",
    "mutual_coherence",
    "recovery_bound_ok",
    "rnn_params_from_problem",
    "rnn_cell_step",
    "rnn_equiv_check",
    "random_problem",
]


def soft_threshold(z, beta):
    """``(|z| - beta)_+ * sign(z)``, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.maximum(np.abs(z) - beta, 0.0)


def soft_threshold_pos(z, beta):
    """One-sided shrink ``max(z - beta, 0)``."""
    return np.maximum(np.asarray(z, dtype=np.float64) - beta, 0.0)


def hard_threshold(z, beta):
    z = np.asarray(z, dtype=np.float64)
    return np.where(np.abs(z) > beta, z, 0.0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_soft_identity_check(z, beta: float) -> bool:
    """True iff ``S_beta(z) == ReLU(z - beta) - ReLU(-z - beta)`` exactly."""
    z = np.asarray(z, dtype=np.float64)
    lhs = soft_threshold(z, beta)
    rhs = relu(z - beta) - relu(-z - beta)
    # -0.0 == 0.0, so signed zeros do not count as a mismatch
    return bool(np.array_equal(lhs, rhs))


@dataclass
class SparseProblem:
    """Dictionary ``D`` (N x M), observation ``y``, weight ``lam``, step constant ``c``.

    ``c`` defaults to ``1.01 * ||D^T D||_2``. Columns of ``D`` are scaled to
    unit norm unless ``normalize=False``.
    """

    D: np.ndarray
    y: np.ndarray
    lam: float = 0.1
    c: float | None = None
    normalize: bool = True

    def __post_init__(self):
        D = as_matrix(self.D)
        if self.normalize:
            norms = np.linalg.norm(D, axis=0)
            if np.any(norms == 0):
                raise ValueError("dictionary has a zero column")
            D = D / norms
        self.D = D
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.y.shape[0] != D.shape[0]:
            raise ShapeError(f"y has length {self.y.shape[0]}, D has {D.shape[0]} rows")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        self.gram_norm = spectral_norm_sym(D.T @ D)
        if self.c is None:
            self.c = 1.01 * self.gram_norm
        if not self.c > self.gram_norm:
            raise ValueError(f"c = {self.c} must exceed ||D^T D||_2 = {self.gram_norm}")

    @property
    def N(self) -> int:
        return self.D.shape[0]

    @property
    def M(self) -> int:
        return self.D.shape[1]

    def _code(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64).ravel()
        if z.shape[0] != self.M:
            raise ShapeError(f"code has length {z.shape[0]}, expected {self.M}")
        return z


@dataclass
class IstaState:
    z: np.ndarray
    iteration: int = 0
    cost_history: list = field(default_factory=list)
    converged: bool = False


def cost_f(p: SparseProblem, z) -> float:
    z = p._code(z)
    r = p.y - p.D @ z
    return 0.5 * float(r @ r) + p.lam * float(np.abs(z).sum())


def surrogate_Q(p: SparseProblem, z, z_prev) -> float:
    z = p._code(z)
    z_prev = p._code(z_prev)
    dz = z - z_prev
    Ddz = p.D @ dz
    return cost_f(p, z) + 0.5 * p.c * float(dz @ dz) - 0.5 * float(Ddz @ Ddz)


def ista_step(p: SparseProblem, z_prev) -> np.ndarray:
    z_prev = p._code(z_prev)
    return soft_threshold(p.D.T @ (p.y - p.D @ z_prev) / p.c + z_prev, p.lam / p.c)


def ista_solve(p: SparseProblem, max_iter: int = 100_000, tol: float = 1e-12,
               z0=None) -> IstaState:
    """Iterate until the sup-norm step falls below ``tol`` or ``max_iter`` is hit.

    ``cost_history[0]`` is the cost of the starting point; one entry is
    appended per step.
    """
    z = np.zeros(p.M) if z0 is None else p._code(z0).copy()
    state = IstaState(z=z, cost_history=[cost_f(p, z)])
    for _ in range(int(max_iter)):
        z_next = ista_step(p, state.z)
        step = float(np.max(np.abs(z_next - state.z))) if p.M else 0.0
        state.z = z_next
        state.iteration += 1
        state.cost_history.append(cost_f(p, z_next))
        if step < tol:
            state.converged = True
            break
    return state


def mutual_coherence(D) -> float:
    D = as_matrix(D)
    if D.shape[1] < 2:
        raise ValueError("mutual coherence needs at least two columns")
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        raise ValueError("dictionary has a zero column")
    Dn = D / norms
    G = np.abs(Dn.T @ Dn)
    np.fill_diagonal(G, 0.0)
    return float(min(G.max(), 1.0))


def recovery_bound_ok(D, z) -> bool:
    """``||z||_0 < (1 + 1/mu(D)) / 2``; an incoherent ``D`` always passes."""
    mu = mutual_coherence(D)
    k = int(np.count_nonzero(np.asarray(z)))
    if mu == 0.0:
        return True
    return k < 0.5 * (1.0 + 1.0 / mu)


def rnn_params_from_problem(p: SparseProblem):
    """RNN weights that make one cell update equal one nonnegative ISTA step.

    Returns ``(W_zy, W_zz, b)`` in the cell's convention
    ``z_t = ReLU(W_zy^T y_t + W_zz^T z_{t-1} + b)``.
    """
    W_zy = p.D / p.c                           # (N, M); W_zy^T = D^T / c
    W_zz = np.eye(p.M) - (p.D.T @ p.D) / p.c   # symmetric
    b = -(p.lam / p.c) * np.ones(p.M)
    return W_zy, W_zz, b


def rnn_cell_step(W_zy, W_zz, b, z_prev, y_t) -> np.ndarray:
    return relu(W_zy.T @ y_t + W_zz.T @ z_prev + b)


def rnn_equiv_check(p: SparseProblem, z_prev, y_t) -> float:
    """Max deviation between one RNN state update and one nonnegative ISTA step.

    The ISTA side is ``S+_{lam/c}((1/c) D^T (y_t - D z_prev) + z_prev)``,
    evaluated in its residual form; the RNN side uses the weights from
    :func:`rnn_params_from_problem`.
    """
    z_prev = p._code(z_prev)
    y_t = np.asarray(y_t, dtype=np.float64).ravel()
    if y_t.shape[0] != p.N:
        raise ShapeError(f"y_t has length {y_t.shape[0]}, expected {p.N}")
    ista = soft_threshold_pos(p.D.T @ (y_t - p.D @ z_prev) / p.c + z_prev, p.lam / p.c)
    rnn = rnn_cell_step(*rnn_params_from_problem(p), z_prev, y_t)
    return float(np.max(np.abs(rnn - ista)))


def random_problem(rng: Rng, N: int = 8, M: int = 16, sparsity: int = 3,
                   lam: float = 0.1, noise: float = 0.01) -> tuple[SparseProblem, np.ndarray]:
    """Gaussian dictionary with unit columns and a ``sparsity``-sparse ground-truth code."""
    D = rng.normal(N * M).reshape(N, M)
    D /= np.linalg.norm(D, axis=0)
    z = np.zeros(M)
    support = rng.choice(M, min(sparsity, M))
    z[support] = rng.normal(len(support))
    y = D @ z + noise * rng.normal(N)
    return SparseProblem(D, y, lam), z
