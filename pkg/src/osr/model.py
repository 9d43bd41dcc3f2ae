"""Recurrent encoder with a linear decoder, its exact BPTT gradients, and friends.

Row-vector convention throughout: for a batch of time-ordered inputs ``Y`` of
shape ``(B, T, N)``

    a_t = y_t @ W_zy + z_{t-1} @ W_zz + b,   z_t = ReLU(a_t),   x_t = z_t @ W_xz

which is the column form ``z_t = ReLU(W_zy^T y_t + W_zz^T z_{t-1} + b)`` with
``z_0 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import Rng
from .patching import AnalysisPatch, PatchGeometry

__all__ = [
    "PARAM_NAMES",
    "RnnModel",
    "glorot_uniform",
    "forward",
    "forward_batch",
    "backward",
    "backward_batch",
    "loss_and_grad",
    "predict",
    "Discriminator",
    "AdamState",
    "adam_step",
]

PARAM_NAMES = ("W_zy", "W_zz", "b", "W_xz")


def glorot_uniform(rng: Rng, fan_in: int, fan_out: int, dtype=np.float64) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(fan_in * fan_out, -a, a).reshape(fan_in, fan_out).astype(dtype)


@dataclass
class RnnModel:
    W_zy: np.ndarray
    W_zz: np.ndarray
    b: np.ndarray
    W_xz: np.ndarray
    geom: PatchGeometry
    residual: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.W_zz.shape[0]
        if self.W_zz.shape != (n, n) or self.W_zy.shape != (self.geom.N_x, n):
            raise ValueError("W_zy must be (N_x, n_n) and W_zz (n_n, n_n)")
        if self.b.shape != (n,) or self.W_xz.shape != (n, self.geom.P):
            raise ValueError(f"b must be ({n},) and W_xz ({n}, {self.geom.P})")
        if not all(np.all(np.isfinite(p)) for p in self.params.values()):
            raise ValueError("model parameters must be finite")

    @classmethod
    def init(cls, geom: PatchGeometry, n_n: int, rng: Rng, dtype=np.float64,
             residual: bool = False, meta: dict | None = None) -> "RnnModel":
        return cls(
            W_zy=glorot_uniform(rng, geom.N_x, n_n, dtype),
            W_zz=glorot_uniform(rng, n_n, n_n, dtype),
            b=np.zeros(n_n, dtype=dtype),
            W_xz=glorot_uniform(rng, n_n, geom.P, dtype),
            geom=geom, residual=residual, meta=dict(meta or {}),
        )

    @property
    def n_n(self) -> int:
        return self.W_zz.shape[0]

    @property
    def dtype(self):
        return self.W_zz.dtype

    @property
    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "RnnModel":
        return RnnModel(**{k: v.copy() for k, v in self.params.items()}, geom=self.geom,
                        residual=self.residual, meta=dict(self.meta))


def forward_batch(model: RnnModel, Y: np.ndarray) -> dict:
    """Run the cell over ``Y`` of shape ``(B, T, N)``; returns a cache for BPTT."""
    Y = np.asarray(Y, dtype=model.dtype)
    if Y.ndim != 3 or Y.shape[2] != model.geom.N_x:
        raise ValueError(f"inputs must be (B, T, {model.geom.N_x}), got {Y.shape}")
    B, T, _ = Y.shape
    Z = np.empty((B, T, model.n_n), dtype=model.dtype)
    # input projection for all steps at once; recurrence is the sequential part
    A = Y @ model.W_zy + model.b
    z = np.zeros((B, model.n_n), dtype=model.dtype)
    for t in range(T):
        a = A[:, t]
        if t:
            a += z @ model.W_zz
        z = np.maximum(a, 0)
        Z[:, t] = z
    X = Z @ model.W_xz
    return {"Y": Y, "A": A, "Z": Z, "X": X}


def forward(model: RnnModel, patch):
    """States ``z_1..z_T`` and outputs ``x_1..x_T`` for one patch.

    ``patch`` is an :class:`AnalysisPatch` or a time-ordered ``(T, N)`` array.
    """
    seq = patch.sequence if isinstance(patch, AnalysisPatch) else np.asarray(patch)
    if seq.ndim != 2 or seq.shape[1] != model.geom.N_x:
        raise ValueError(f"patch must be (T, {model.geom.N_x}), got {seq.shape}")
    cache = forward_batch(model, seq[None])
    return cache["Z"][0], cache["X"][0]


def predict(model: RnnModel, Y: np.ndarray) -> np.ndarray:
    return forward_batch(model, Y)["X"]


def backward_batch(model: RnnModel, cache: dict, dX: np.ndarray) -> dict:
    """Gradients of a scalar loss given ``dX = dL/dX`` of shape ``(B, T, P)``.

    ReLU's derivative at 0 is taken as 0.
    """
    Y, A, Z = cache["Y"], cache["A"], cache["Z"]
    dX = np.asarray(dX, dtype=model.dtype)
    B, T, _ = Y.shape
    gW_xz = np.einsum("btn,btp->np", Z, dX)
    dZ = dX @ model.W_xz.T
    dA = np.empty_like(Z)
    da_next = None
    for t in range(T - 1, -1, -1):
        dz = dZ[:, t]
        if da_next is not None:
            dz = dz + da_next @ model.W_zz.T
        da = dz * (Z[:, t] > 0)
        dA[:, t] = da
        da_next = da
    gW_zy = np.einsum("btk,btn->kn", Y, dA)
    gW_zz = np.einsum("btk,btn->kn", Z[:, :-1], dA[:, 1:]) if T > 1 else np.zeros_like(model.W_zz)
    gb = dA.sum(axis=(0, 1))
    return {"W_zy": gW_zy, "W_zz": gW_zz, "b": gb, "W_xz": gW_xz}


def loss_and_grad(X, target, kind: str = "l2"):
    """Mean elementwise loss and its gradient with respect to ``X``.

    ``l2`` is the mean squared error and ``l1`` the mean absolute error, whose
    subgradient at zero residual is 0.
    """
    diff = X - target
    n = diff.size
    if kind == "l2":
        return float(np.mean(diff * diff, dtype=np.float64)), (2.0 / n) * diff
    if kind == "l1":
        return float(np.mean(np.abs(diff), dtype=np.float64)), np.sign(diff) / n
    raise ValueError(f"unknown loss kind {kind!r}")


def backward(model: RnnModel, patch, target, loss_kind: str = "l2", scale: float = 1.0) -> dict:
    """Per-patch BPTT gradients of ``scale * loss(forward(patch), target)``."""
    seq = patch.sequence if isinstance(patch, AnalysisPatch) else np.asarray(patch)
    cache = forward_batch(model, seq[None])
    target = np.asarray(target, dtype=model.dtype).reshape(cache["X"].shape)
    _, dX = loss_and_grad(cache["X"], target, loss_kind)
    return backward_batch(model, cache, scale * dX)


class Discriminator:
    """Two fully-connected layers with a ReLU between and a sigmoid score.

    Inputs are flattened patches in [0, 1].
    """

    names = ("W1", "b1", "W2", "b2")

    def __init__(self, n_in: int, hidden: int, rng: Rng, dtype=np.float64):
        self.W1 = glorot_uniform(rng, n_in, hidden, dtype)
        self.b1 = np.zeros(hidden, dtype=dtype)
        self.W2 = glorot_uniform(rng, hidden, 1, dtype)
        self.b2 = np.zeros(1, dtype=dtype)

    @property
    def params(self) -> dict:
        return {n: getattr(self, n) for n in self.names}

    def logits(self, X):
        X = np.asarray(X, dtype=self.W1.dtype).reshape(len(X), -1)
        H = np.maximum(X @ self.W1 + self.b1, 0)
        return (H @ self.W2 + self.b2)[:, 0], (X, H)

    def __call__(self, X):
        s, _ = self.logits(X)
        return 1.0 / (1.0 + np.exp(-s))

    def _backward(self, cache, ds):
        X, H = cache
        ds = ds[:, None].astype(self.W1.dtype)
        dH = (ds @ self.W2.T) * (H > 0)
        grads = {"W1": X.T @ dH, "b1": dH.sum(0), "W2": H.T @ ds, "b2": ds.sum(0)}
        return grads, dH @ self.W1.T

    def loss_and_grads(self, real, fake):
        """Binary cross-entropy for real=1 / fake=0, with parameter gradients."""
        s_r, c_r = self.logits(real)
        s_f, c_f = self.logits(fake)
        loss = float(np.mean(np.logaddexp(0, -s_r)) + np.mean(np.logaddexp(0, s_f)))
        # d/ds softplus(-s) = sigmoid(s) - 1, d/ds softplus(s) = sigmoid(s)
        g_r, _ = self._backward(c_r, (_sigmoid(s_r) - 1.0) / len(s_r))
        g_f, _ = self._backward(c_f, _sigmoid(s_f) / len(s_f))
        return loss, {k: g_r[k] + g_f[k] for k in g_r}

    def generator_loss_and_input_grad(self, fake):
        """Non-saturating generator loss ``mean(-log D(fake))`` and its input gradient."""
        s, cache = self.logits(fake)
        loss = float(np.mean(np.logaddexp(0, -s)))
        _, dX = self._backward(cache, (_sigmoid(s) - 1.0) / len(s))
        return loss, dX.reshape(np.shape(fake))


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, st: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``st``.

    ``theta -= lr * m_hat / (sqrt(v_hat) + epsilon)``.
    """
    st.step += 1
    bc1 = 1.0 - st.beta1 ** st.step
    bc2 = 1.0 - st.beta2 ** st.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
        if k not in st.m:
            st.m[k] = np.zeros_like(p)
            st.v[k] = np.zeros_like(p)
        m, v = st.m[k], st.v[k]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * (g * g)
        p -= (st.lr * (m / bc1) / (np.sqrt(v / bc2) + st.epsilon)).astype(p.dtype, copy=False)
