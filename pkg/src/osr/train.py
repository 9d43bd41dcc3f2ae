"""One-shot training from a single degraded/clean pair, and inference.

Intensities are divided by 255 before entering the network. In residual mode
the network input is the (upsampled) degraded plane and the target is
``clean - degraded``; restoration adds the prediction back.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .images import GRAY, RGB, YCBCR, PlanarImage, luminance, rgb_to_ycbcr, ycbcr_to_rgb
from .linalg import Rng
from .model import (AdamState, Discriminator, RnnModel, adam_step, backward_batch,
                    forward_batch, loss_and_grad)
from .patching import PATCH2PATCH, PatchGeometry, apply_patchwise, patch_sequences, \
    target_sequences, training_anchors
from .resample import upsample_bicubic

__all__ = ["TrainConfig", "TrainResult", "train_one_shot", "training_risk",
           "restore_plane", "restore"]

log = logging.getLogger(__name__)

SCALE = 255.0


@dataclass
class TrainConfig:
    epochs_stage1: int = 45
    epochs_stage2: int = 0
    batch_size: int = 32
    loss: str = "l2"
    lambda_adv: float = 1e-3
    n_n: int = 256
    seed: int = 0
    sampling: str = "random_m"
    patches_per_epoch: int = 4096
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-8
    L_t: int = 9
    N_x: int = 9
    mode: str = PATCH2PATCH
    stride: int = 0
    disc_hidden: int = 256
    dtype: str = "float32"
    residual: bool = False
    target_risk: float = 0.0

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise ValueError("lambda_adv must be >= 0")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1 or self.n_n < 1:
            raise ValueError("batch_size and n_n must be >= 1")
        if self.loss not in ("l1", "l2"):
            raise ValueError(f"loss must be l1 or l2, got {self.loss!r}")
        if self.sampling not in ("random_m", "all", "fixed"):
            raise ValueError(f"unknown sampling policy {self.sampling!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def geometry(self) -> PatchGeometry:
        return PatchGeometry(self.L_t, self.N_x, mode=self.mode, stride=self.stride or None)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_types(cls) -> dict:
        hints = {"int": int, "float": float, "str": str, "bool": bool}
        return {f.name: hints[f.type] if isinstance(f.type, str) else f.type for f in fields(cls)}


@dataclass
class TrainResult:
    model: RnnModel
    discriminator: Discriminator | None = None
    history: list = field(default_factory=list)


def _plane(x) -> np.ndarray:
    return luminance(x) if isinstance(x, PlanarImage) else np.asarray(x, dtype=np.float64)


def training_risk(model: RnnModel, inputs: np.ndarray, targets: np.ndarray,
                  batch_size: int = 4096) -> float:
    """Mean squared error of ``model`` over a set of (input, target) sequences."""
    total = 0.0
    for s in range(0, len(inputs), batch_size):
        X = forward_batch(model, inputs[s:s + batch_size])["X"]
        d = (X - targets[s:s + batch_size]).astype(np.float64)
        total += float(np.sum(d * d))
    return total / targets.size


def train_one_shot(degraded, clean, cfg: TrainConfig, rng: Rng | None = None,
                   anchors: np.ndarray | None = None, meta: dict | None = None) -> TrainResult:
    """Fit an RNN to one degraded/clean pair on the same pixel grid.

    ``anchors`` restricts training to a fixed patch set (the sample-size
    study); otherwise the sampling policy in ``cfg`` decides which anchors
    each epoch sees. Stage 1 minimizes the content loss; stage 2, when
    ``epochs_stage2 > 0``, alternates one discriminator step with one
    generator step on ``MSE + lambda_adv * adversarial``.
    """
    rng = Rng(cfg.seed) if rng is None else rng
    dtype = np.dtype(cfg.dtype)
    geom = cfg.geometry()
    y_plane = _plane(degraded) / SCALE
    x_plane = _plane(clean) / SCALE
    if y_plane.shape != x_plane.shape:
        raise ValueError(f"degraded {y_plane.shape} and clean {x_plane.shape} grids differ")
    target_plane = x_plane - y_plane if cfg.residual else x_plane

    if anchors is None:
        anchors = training_anchors(*y_plane.shape, geom)
    anchors = np.asarray(anchors).reshape(-1, 2)
    if len(anchors) == 0:
        raise ValueError("no training patches available")
    inputs = patch_sequences(y_plane, geom, anchors).astype(dtype)
    targets = target_sequences(target_plane, geom, anchors).astype(dtype)
    bases = target_sequences(y_plane, geom, anchors).astype(dtype) if cfg.residual else None

    model_meta = {"train_config": cfg.to_dict()}
    model_meta.update(meta or {})
    model = RnnModel.init(geom, cfg.n_n, rng.spawn(1), dtype, residual=cfg.residual,
                          meta=model_meta)
    result = TrainResult(model)
    opt = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    sample_rng = rng.spawn(2)
    n_all = len(anchors)

    def epoch_indices():
        if cfg.sampling == "random_m" and cfg.patches_per_epoch < n_all:
            return sample_rng.choice(n_all, cfg.patches_per_epoch)
        return sample_rng.permutation(n_all)

    for epoch in range(cfg.epochs_stage1):
        t0 = time.perf_counter()
        idx = epoch_indices()
        loss_sum = 0.0
        zeros = 0
        acts = 0
        for s in range(0, len(idx), cfg.batch_size):
            b = idx[s:s + cfg.batch_size]
            cache = forward_batch(model, inputs[b])
            loss, dX = loss_and_grad(cache["X"], targets[b], cfg.loss)
            adam_step(model.params, backward_batch(model, cache, dX), opt)
            loss_sum += loss * len(b)
            zeros += int(np.count_nonzero(cache["Z"] == 0))
            acts += cache["Z"].size
        rec = {"epoch": epoch + 1, "stage": 1, "loss": loss_sum / len(idx),
               "latent_zero_fraction": zeros / acts, "seconds": time.perf_counter() - t0}
        if cfg.target_risk > 0 or cfg.sampling == "fixed":
            rec["risk"] = training_risk(model, inputs, targets)
        result.history.append(rec)
        log.info("stage 1 epoch %d loss %.6g sparsity %.3f", rec["epoch"], rec["loss"],
                 rec["latent_zero_fraction"])
        if cfg.target_risk > 0 and rec["risk"] <= cfg.target_risk:
            break

    if cfg.epochs_stage2 > 0:
        result.discriminator = _train_adversarial(model, cfg, inputs, targets, bases,
                                                  rng.spawn(3), sample_rng, result.history,
                                                  epoch_indices)
    return result


def _train_adversarial(model, cfg, inputs, targets, bases, init_rng, sample_rng, history,
                       epoch_indices):
    geom = model.geom
    disc = Discriminator(geom.L_t * geom.P, cfg.disc_hidden, init_rng, model.dtype)
    g_opt = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    d_opt = AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    start = len(history)
    for epoch in range(cfg.epochs_stage2):
        t0 = time.perf_counter()
        idx = epoch_indices()
        sums = np.zeros(3)
        for s in range(0, len(idx), cfg.batch_size):
            b = idx[s:s + cfg.batch_size]
            real = targets[b] + bases[b] if bases is not None else targets[b]
            cache = forward_batch(model, inputs[b])
            fake = cache["X"] + bases[b] if bases is not None else cache["X"]
            d_loss, d_grads = disc.loss_and_grads(real, fake)
            adam_step(disc.params, d_grads, d_opt)
            mse, dX = loss_and_grad(cache["X"], targets[b], "l2")
            adv, dX_adv = disc.generator_loss_and_input_grad(fake)
            adam_step(model.params, backward_batch(model, cache, dX + cfg.lambda_adv * dX_adv),
                      g_opt)
            sums += np.array([mse, adv, d_loss]) * len(b)
        mse, adv, d_loss = sums / len(idx)
        history.append({"epoch": start + epoch + 1, "stage": 2, "loss": mse + cfg.lambda_adv * adv,
                        "mse": mse, "adv": adv, "d_loss": d_loss,
                        "seconds": time.perf_counter() - t0})
        log.info("stage 2 epoch %d mse %.6g adv %.4g d %.4g", epoch + 1, mse, adv, d_loss)
    return disc


def restore_plane(model: RnnModel, plane, batch_size: int = 2048,
                  stride: int | None = None) -> np.ndarray:
    """Restore a luminance plane already on the output grid.

    ``stride`` overrides the Patch2Patch scan stride stored in the model.
    """
    plane = np.asarray(plane, dtype=np.float64)
    g = model.geom
    if stride is not None and stride != g.stride:
        g = PatchGeometry(g.L_t, g.N_x, g.n_L, g.n_R, g.mode, stride)
    if plane.shape[0] < g.L_t or plane.shape[1] < g.N_x:
        raise ValueError(f"image {plane.shape} smaller than patch {g.L_t}x{g.N_x}")
    scaled = (plane / SCALE).astype(model.dtype)
    out = apply_patchwise(scaled, g, lambda Y: forward_batch(model, Y)["X"], batch_size)
    out = out * SCALE
    return plane + out if model.residual else out


def restore(model: RnnModel, degraded: PlanarImage, mode: str | None = None,
            upscale: int | None = None) -> PlanarImage:
    """Restore the luminance of ``degraded``; chroma is carried along.

    With ``upscale > 1`` (default taken from the model's training metadata)
    every plane is first bicubically upsampled, the network then adds its
    predicted residual to the luminance.
    """
    if mode is not None and PatchGeometry(model.geom.L_t, model.geom.N_x, mode=mode,
                                          stride=model.geom.stride).mode != model.geom.mode:
        raise ValueError(f"model was trained for mode {model.geom.mode}, not {mode}")
    if upscale is None:
        upscale = int(model.meta.get("decimation", 1))
    if degraded.colorspace == RGB:
        work = rgb_to_ycbcr(degraded)
    else:
        work = degraded
    planes = work.planes
    if upscale > 1:
        planes = np.stack([upsample_bicubic(p, upscale) for p in planes])
    y = restore_plane(model, planes[0])
    out = PlanarImage(np.concatenate([y[None], planes[1:]]), work.colorspace)
    if degraded.colorspace == RGB:
        return ycbcr_to_rgb(out)
    if degraded.colorspace == YCBCR:
        return out
    return PlanarImage(out.planes, GRAY)
