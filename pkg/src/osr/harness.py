"""Experiment drivers behind the command-line interface.

Each driver takes already-parsed arguments, writes its files under an output
directory and returns the rows it wrote, so tests can call it directly.
Every CSV carries a ``config_hash`` column; every run leaves a ``run.json``
manifest. Wall-clock timings go to a separate ``timings.json`` so the rest of
the output is byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import save_checkpoint
from .config import RunConfig
from .degrade import DegradationSpec, blur, degrade, residual_sigma
from .images import GRAY, RGB, PlanarImage, load_image, luminance, save_image, to_uint8
from .linalg import Rng
from .metrics import Metrics, compute_metrics
from .model import RnnModel
from .patching import PatchGeometry, training_anchors
from .resample import upsample_bicubic
from .sparse import SparseProblem, cost_f, ista_solve, random_problem, rnn_equiv_check
from .train import TrainConfig, TrainResult, restore, train_one_shot

__all__ = [
    "IMAGE_SUFFIXES", "PATTERNS", "config_hash", "write_csv", "write_manifest", "list_images",
    "quantize", "crop_to_multiple", "training_pair", "train_pair", "degrade_files",
    "restore_files", "evaluate", "sweep_noise", "sample_size", "mismatch", "synth_pattern",
    "synth_pairs", "sc_demo", "model_degradation", "check_mode",
]

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg")
PATTERNS = ("chessboard", "stripes", "dots")


# ---------------------------------------------------------------- records


def config_hash(config: dict) -> str:
    """Short sha256 of the canonical JSON form of ``config``."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


def write_csv(path, header: list, rows: list, chash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + ["config_hash"])
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header] + [chash])
    return path


def write_manifest(out_dir, command: str, config: dict, outputs: list, extra: dict | None = None,
                   timings: dict | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "version": __version__, "config": config,
                "config_hash": config_hash(config),
                "outputs": sorted(str(Path(p).relative_to(out_dir)) if _under(p, out_dir)
                                  else str(p) for p in outputs)}
    manifest.update(extra or {})
    (out_dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                 default=str) + "\n")
    if timings is not None:
        (out_dir / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    return manifest


def _under(p, root) -> bool:
    try:
        Path(p).relative_to(root)
        return True
    except ValueError:
        return False


def list_images(path) -> list[Path]:
    """A single image file, or every image in a directory sorted by name."""
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not path.exists():
        raise FileNotFoundError(path)
    return [path]


def _map(fn, items, workers: int):
    # results come back in input order whatever the pool does
    if workers <= 1:
        return [fn(i, x) for i, x in enumerate(items)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(len(items)), items))


def _mean_row(rows: list, keys: list) -> dict:
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


# ---------------------------------------------------------------- images


def quantize(img: PlanarImage) -> PlanarImage:
    """The image exactly as it would be read back after saving."""
    if img.colorspace not in (GRAY, RGB):
        raise ValueError("quantize expects a Gray or RGB image")
    return PlanarImage(to_uint8(img.planes).astype(np.float64), img.colorspace)


def crop_to(img: PlanarImage, h: int, w: int) -> PlanarImage:
    return PlanarImage(img.planes[:, :h, :w].copy(), img.colorspace)


def crop_to_multiple(img: PlanarImage, factor: int) -> PlanarImage:
    return crop_to(img, (img.height // factor) * factor, (img.width // factor) * factor)


def model_degradation(model: RnnModel) -> DegradationSpec:
    d = model.meta.get("degradation")
    if d is None:
        raise ValueError("checkpoint has no degradation metadata")
    return DegradationSpec.gaussian(d["blur_sigma"], d["noise_sigma"], d["decimation"],
                                    d["kernel_size"])


def training_pair(clean: PlanarImage, degraded: PlanarImage, decimation: int):
    """Luminance planes (input, target) on a common grid.

    For super-resolution the degraded image is bicubically upsampled and the
    clean image cropped to the matching multiple of the factor.
    """
    y = luminance(degraded)
    x = luminance(clean)
    if decimation > 1:
        # the decimated grid keeps index 0, so it can overhang the clean image by < f pixels
        y = upsample_bicubic(y, decimation)
        h, w = min(x.shape[0], y.shape[0]), min(x.shape[1], y.shape[1])
        y, x = y[:h, :w], x[:h, :w]
    if x.shape != y.shape:
        raise ValueError(f"clean {x.shape} and degraded {y.shape} do not match "
                         f"for decimation {decimation}")
    return y, x


def _check_patch_fit(shape, cfg: TrainConfig, what: str):
    if shape[0] < cfg.L_t or shape[1] < cfg.N_x:
        raise ValueError(f"{what} {shape[0]}x{shape[1]} is smaller than the "
                         f"{cfg.L_t}x{cfg.N_x} patch")


# ---------------------------------------------------------------- commands


def degrade_files(inputs: list, run: RunConfig, seed: int, out_dir, workers: int = 1) -> list:
    """Degrade each input with its own stream ``Rng(seed).spawn(index)``.

    Unreadable files are reported in the manifest and skipped; a degraded
    image too small for the configured patch stops the run.
    """
    out_dir = Path(out_dir)
    spec = run.degradation()
    root = Rng(seed)

    def work(i, path):
        try:
            img = load_image(path)
        except (OSError, ValueError) as exc:
            log.error("%s: %s", path, exc)
            return {"index": i, "input": str(path), "error": str(exc)}
        f = spec.decimation
        _check_patch_fit((img.height // f, img.width // f), run.train, f"degraded {path.name}")
        out = quantize(degrade(img, spec, root.spawn(i)))
        dest = out_dir / (Path(path).stem + ".png")
        save_image(out, dest)
        return {"index": i, "input": str(path), "output": str(dest)}

    t0 = time.perf_counter()
    records = _map(work, list(inputs), workers)
    config = {"degradation": spec.to_dict(), "seed": seed}
    write_manifest(out_dir, "degrade", config, [r["output"] for r in records if "output" in r],
                   {"files": records}, {"total_seconds": time.perf_counter() - t0})
    return records


def train_pair(clean: PlanarImage, degraded: PlanarImage, run: RunConfig,
               seed: int | None = None) -> TrainResult:
    """One-shot training on a pair; super-resolution always learns the residual."""
    cfg = run.train
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if run.decimation > 1 and not cfg.residual:
        cfg = replace(cfg, residual=True)
    y, x = training_pair(clean, degraded, run.decimation)
    _check_patch_fit(y.shape, cfg, "training image")
    meta = {"degradation": run.degradation().to_dict(), "decimation": run.decimation}
    return train_one_shot(y, x, cfg, Rng(cfg.seed), meta=meta)


LOSS_COLUMNS = ("epoch", "stage", "loss", "latent_zero_fraction", "risk", "mse", "adv", "d_loss")


def write_training_outputs(result: TrainResult, run: RunConfig, checkpoint, out_dir) -> list:
    out_dir = Path(out_dir)
    save_checkpoint(result.model, checkpoint)
    cols = [c for c in LOSS_COLUMNS if any(c in h for h in result.history)]
    rows = [{c: h.get(c, "") for c in cols} for h in result.history]
    chash = config_hash(run.to_dict())
    loss_csv = write_csv(out_dir / "loss.csv", cols, rows, chash)
    return [Path(checkpoint), loss_csv]


def _restore_one(model: RnnModel, img: PlanarImage, upscale: int | None = None) -> PlanarImage:
    return quantize(restore(model, img, upscale=upscale))


def check_mode(model: RnnModel, mode: str | None) -> None:
    """Refuse a requested inference mode the checkpoint was not trained for."""
    if mode is None:
        return
    g = model.geom
    want = PatchGeometry(g.L_t, g.N_x, g.n_L, g.n_R, mode, g.stride).mode
    if want != g.mode:
        raise ValueError(f"checkpoint was trained for mode {g.mode}, not {want}")


def restore_files(model: RnnModel, inputs: list, out_dir, truth=None, workers: int = 1,
                  mode: str | None = None) -> list:
    """Restore every input; with ``truth`` also score against same-named images."""
    out_dir = Path(out_dir)
    truth_files = {p.stem: p for p in list_images(truth)} if truth is not None else None

    def work(i, path):
        out = _restore_one(model, load_image(path))
        dest = out_dir / (Path(path).stem + ".png")
        save_image(out, dest)
        row = {"image": Path(path).stem, "output": str(dest)}
        if truth_files is not None:
            ref = load_image(truth_files[Path(path).stem])
            # an upsampled decimated grid can overhang the truth by < f pixels
            h, w = min(ref.height, out.height), min(ref.width, out.width)
            row.update(_metric_cols(compute_metrics(crop_to(ref, h, w), crop_to(out, h, w)), ""))
        return row

    check_mode(model, mode)
    t0 = time.perf_counter()
    rows = _map(work, list(inputs), workers)
    config = {"checkpoint_meta": model.meta, "geometry": model.geom.to_dict()}
    chash = config_hash(config)
    outputs = [r["output"] for r in rows]
    if truth_files is not None:
        cols = ["image", "psnr_db", "ssim"]
        outputs.append(write_csv(out_dir / "metrics.csv", cols, rows, chash))
        mean = _mean_row(rows, ["psnr_db", "ssim"])
        outputs.append(write_csv(out_dir / "summary.csv", ["n_images", "psnr_db", "ssim"],
                                 [dict(mean, n_images=len(rows))], chash))
    write_manifest(out_dir, "restore", config, outputs, None,
                   {"total_seconds": time.perf_counter() - t0})
    return rows


def _metric_cols(m: Metrics, suffix: str) -> dict:
    return {f"psnr_db{suffix}": m.psnr_db, f"ssim{suffix}": m.ssim}


def evaluate(model: RnnModel, clean_files: list, seed: int, out_dir=None,
             workers: int = 1, noise_sigma: float | None = None) -> dict:
    """Degrade held-out clean images as in training, then score their restorations.

    The baseline is the degraded image itself for deblurring and its bicubic
    upsampling for super-resolution. Returns per-image rows and their means.
    """
    spec = model_degradation(model)
    if noise_sigma is not None:
        spec = replace(spec, noise_sigma=noise_sigma)
    f = spec.decimation
    root = Rng(seed)

    def work(i, path):
        clean = crop_to_multiple(load_image(path), f)
        deg = quantize(degrade(clean, spec, root.spawn(i)))
        if f > 1:
            base_planes = np.stack([upsample_bicubic(p, f) for p in deg.planes])
            base = quantize(PlanarImage(base_planes, deg.colorspace))
        else:
            base = deg
        out = _restore_one(model, deg, f)
        row = {"image": Path(path).stem}
        row.update(_metric_cols(compute_metrics(clean, base), "_in"))
        row.update(_metric_cols(compute_metrics(clean, out), "_out"))
        row["psnr_gain_db"] = row["psnr_db_out"] - row["psnr_db_in"]
        return row, deg, out

    t0 = time.perf_counter()
    results = _map(work, list(clean_files), workers)
    rows = [r[0] for r in results]
    cols = ["image", "psnr_db_in", "ssim_in", "psnr_db_out", "ssim_out", "psnr_gain_db"]
    mean = _mean_row(rows, cols[1:])
    report = {"rows": rows, "mean": mean}
    if out_dir is not None:
        out_dir = Path(out_dir)
        config = {"checkpoint_meta": model.meta, "seed": seed, "degradation": spec.to_dict()}
        chash = config_hash(config)
        outputs = [write_csv(out_dir / "metrics.csv", cols, rows, chash),
                   write_csv(out_dir / "summary.csv", ["n_images"] + cols[1:],
                             [dict(mean, n_images=len(rows))], chash)]
        for row, deg, out in results:
            for tag, img in (("degraded", deg), ("restored", out)):
                dest = out_dir / tag / f"{row['image']}.png"
                save_image(img, dest)
                outputs.append(dest)
        write_manifest(out_dir, "eval", config, outputs, {"mean": mean},
                       {"total_seconds": time.perf_counter() - t0})
    return report


def sweep_noise(model: RnnModel, clean: PlanarImage, sigmas: list, seed: int,
                out_dir=None) -> list:
    """PSNR of the restoration as the input noise level varies, blur fixed."""
    spec = model_degradation(model)
    f = spec.decimation
    clean = crop_to_multiple(clean, f)
    root = Rng(seed)
    rows = []
    for k, s in enumerate(sigmas):
        deg = quantize(degrade(clean, replace(spec, noise_sigma=float(s)), root.spawn(k)))
        m = compute_metrics(clean, _restore_one(model, deg, f))
        rows.append({"sigma_n": float(s), "psnr_db": m.psnr_db, "ssim": m.ssim})
    if out_dir is not None:
        config = {"checkpoint_meta": model.meta, "seed": seed, "sigmas": [float(s) for s in sigmas]}
        path = write_csv(Path(out_dir) / "sweep_noise.csv", ["sigma_n", "psnr_db", "ssim"], rows,
                         config_hash(config))
        write_manifest(out_dir, "sweep-noise", config, [path])
    return rows


def _recovery_error(model: RnnModel, eval_pairs: list) -> float:
    """Mean squared error, in 8-bit units, of the restored luminance."""
    total, count = 0.0, 0
    for clean, deg in eval_pairs:
        out = _restore_one(model, deg)
        d = luminance(out) - luminance(clean)
        total += float(np.sum(d * d))
        count += d.size
    return total / count


def sample_size(clean: PlanarImage, degraded: PlanarImage, ms: list, delta_m: float,
                eval_clean: list, run: RunConfig, seed: int, max_epochs: int = 500,
                out_dir=None) -> list:
    """Train on nested random patch subsets until the training risk reaches ``delta_m``.

    Subsets share one random order, so each larger set contains the smaller
    ones. The recovery error is measured on ``eval_clean`` degraded with the
    training degradation.
    """
    spec = run.degradation()
    cfg = replace(run.train, sampling="fixed", target_risk=float(delta_m),
                  epochs_stage1=int(max_epochs), epochs_stage2=0, seed=seed)
    if run.decimation > 1:
        cfg = replace(cfg, residual=True)
    y, x = training_pair(clean, degraded, run.decimation)
    anchors = training_anchors(*y.shape, cfg.geometry())
    if max(ms) > len(anchors):
        raise ValueError(f"m = {max(ms)} exceeds the {len(anchors)} available training patches")
    order = Rng(seed).spawn(7).permutation(len(anchors))
    root = Rng(seed).spawn(8)
    eval_pairs = []
    for i, img in enumerate(eval_clean):
        img = crop_to_multiple(img, run.decimation)
        eval_pairs.append((img, quantize(degrade(img, spec, root.spawn(i)))))
    meta = {"degradation": spec.to_dict(), "decimation": run.decimation}
    rows = []
    for m in ms:
        res = train_one_shot(y, x, cfg, Rng(seed), anchors=anchors[order[:m]], meta=meta)
        last = res.history[-1] if res.history else {"risk": float("nan"), "epoch": 0}
        rows.append({"m": int(m), "epochs": last["epoch"], "training_risk": last["risk"],
                     "reached": int(last["risk"] <= delta_m),
                     "recovery_error": _recovery_error(res.model, eval_pairs)})
        log.info("m=%d epochs=%d risk=%.3g recovery=%.4g", m, rows[-1]["epochs"],
                 rows[-1]["training_risk"], rows[-1]["recovery_error"])
    if out_dir is not None:
        config = dict(run.to_dict(), ms=list(ms), delta_m=delta_m, max_epochs=max_epochs,
                      seed=seed)
        path = write_csv(Path(out_dir) / "sample_size.csv",
                         ["m", "epochs", "training_risk", "reached", "recovery_error"], rows,
                         config_hash(config))
        write_manifest(out_dir, "sample-size", config, [path])
    return rows


def _rel_l2(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def mismatch(model: RnnModel, clean: PlanarImage, sigma_ts: list, seed: int,
             noise_sigma: float = 0.0, column: int = 55, margin: int = 12,
             threshold: float = 0.15, out_dir=None) -> list:
    """Restore inputs blurred with ``sigma_t`` by a model trained at ``sigma_s``.

    A sharper input (``sigma_t < sigma_s``) should come out as the matched
    restoration blurred further by the residual kernel, so ``f_t * h(t->s)``
    is compared with ``f_s``; a blurrier input is compared the other way
    round. Deviations are relative l2 norms of column profiles, taken over
    columns at least ``margin`` pixels from the border; the gate is their
    maximum.
    """
    spec_s = model_degradation(model)
    if spec_s.decimation != 1:
        raise ValueError("the mismatch study needs a deblurring checkpoint")
    sigma_s = spec_s.kernel.sigma
    size = spec_s.kernel.size
    plane = luminance(clean)
    h, w = plane.shape
    if w <= 2 * margin:
        raise ValueError(f"image width {w} leaves no interior columns with margin {margin}")
    col = int(np.clip(column, margin, w - margin - 1))
    root = Rng(seed)

    def restored(sigma, k):
        spec = DegradationSpec.gaussian(sigma, noise_sigma, 1, size)
        deg = quantize(degrade(PlanarImage.gray(plane), spec, root.spawn(k)))
        return luminance(_restore_one(model, deg, 1))

    f_s = restored(sigma_s, 0)
    rows, profiles = [], {"row": np.arange(h), "f_s": f_s[:, col]}
    for k, sigma_t in enumerate(sigma_ts, 1):
        f_t = restored(sigma_t, k)
        if math.isclose(sigma_t, sigma_s):
            res_sigma, lhs, rhs = 0.0, f_t, f_s
        elif sigma_t < sigma_s:
            res_sigma = residual_sigma(sigma_t, sigma_s)
            lhs, rhs = blur(f_t, res_sigma, size), f_s
        else:
            res_sigma = residual_sigma(sigma_s, sigma_t)
            lhs, rhs = f_t, blur(f_s, res_sigma, size)
        inner = slice(margin, w - margin)
        per_col = np.linalg.norm(lhs[:, inner] - rhs[:, inner], axis=0) / \
            np.linalg.norm(rhs[:, inner], axis=0)
        dev = float(per_col.max())
        rows.append({"sigma_t": float(sigma_t), "sigma_s": sigma_s, "residual_sigma": res_sigma,
                     "column": col, "column_deviation": _rel_l2(lhs[:, col], rhs[:, col]),
                     "max_interior_deviation": dev, "threshold": threshold,
                     "passed": int(dev < threshold)})
        profiles[f"f_t_{sigma_t:g}"] = f_t[:, col]
        profiles[f"compared_{sigma_t:g}"] = lhs[:, col]
        profiles[f"reference_{sigma_t:g}"] = rhs[:, col]
    if out_dir is not None:
        out_dir = Path(out_dir)
        config = {"checkpoint_meta": model.meta, "seed": seed, "sigma_ts": list(sigma_ts),
                  "noise_sigma": noise_sigma, "column": col, "margin": margin,
                  "threshold": threshold}
        chash = config_hash(config)
        cols = list(rows[0]) if rows else []
        outputs = [write_csv(out_dir / "mismatch.csv", cols, rows, chash)]
        prof_rows = [{k: (int(v[r]) if k == "row" else float(v[r])) for k, v in profiles.items()}
                     for r in range(h)]
        outputs.append(write_csv(out_dir / "profile.csv", list(profiles), prof_rows, chash))
        write_manifest(out_dir, "mismatch", config, outputs)
    return rows


def synth_pattern(name: str, size: int = 128, cell: int = 16) -> np.ndarray:
    """Binary test pattern with values 0 and 255."""
    if name not in PATTERNS:
        raise ValueError(f"pattern must be one of {PATTERNS}, got {name!r}")
    if size < 1 or cell < 1:
        raise ValueError("size and cell must be >= 1")
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    if name == "chessboard":
        on = (i // cell + j // cell) % 2 == 1
    elif name == "stripes":
        on = (j // cell) % 2 == 1
    else:
        ci, cj = i % cell - (cell - 1) / 2, j % cell - (cell - 1) / 2
        on = ci * ci + cj * cj <= (cell / 4) ** 2
    return np.where(on, 255.0, 0.0)


def synth_pairs(pattern: str, size: int, cell: int, run: RunConfig, seed: int, out_dir) -> dict:
    out_dir = Path(out_dir)
    clean = PlanarImage.gray(synth_pattern(pattern, size, cell))
    spec = run.degradation()
    deg = quantize(degrade(clean, spec, Rng(seed)))
    save_image(clean, out_dir / "clean.png")
    save_image(deg, out_dir / "degraded.png")
    config = {"pattern": pattern, "size": size, "cell": cell, "seed": seed,
              "degradation": spec.to_dict()}
    write_manifest(out_dir, "synth-pairs", config, [out_dir / "clean.png",
                                                   out_dir / "degraded.png"])
    return {"clean": clean, "degraded": deg}


def sc_demo(N: int, M: int, sparsity: int, lam: float, iters: int, seed: int,
            orthonormal: bool = False, checks: int = 1000, out_dir=None) -> dict:
    """ISTA on a random sparse-coding problem plus the RNN equivalence check."""
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    rng = Rng(seed)
    if orthonormal:
        Q, _ = np.linalg.qr(rng.normal(N * N).reshape(N, N))
        problem = SparseProblem(Q, rng.normal(N), lam)
    else:
        problem, _ = random_problem(rng, N, M, sparsity, lam)
    state = ista_solve(problem, max_iter=iters, tol=0.0)
    hist = state.cost_history
    check_rng = rng.spawn(1)
    dev = 0.0
    for _ in range(checks):
        z = np.abs(check_rng.normal(problem.M))
        y = check_rng.normal(problem.N)
        dev = max(dev, rnn_equiv_check(problem, z, y))
    report = {"N": problem.N, "M": problem.M, "lam": lam, "c": problem.c,
              "iterations": state.iteration, "final_cost": cost_f(problem, state.z),
              "monotone": bool(np.all(np.diff(hist) <= 1e-12)),
              "equivalence_checks": checks, "equivalence_max_deviation": dev,
              "nonzeros": int(np.count_nonzero(state.z))}
    if orthonormal:
        report["ls_deviation"] = float(np.max(np.abs(state.z - problem.D.T @ problem.y)))
    if out_dir is not None:
        out_dir = Path(out_dir)
        config = {"N": N, "M": M, "sparsity": sparsity, "lam": lam, "iters": iters, "seed": seed,
                  "orthonormal": orthonormal, "checks": checks}
        chash = config_hash(config)
        path = write_csv(out_dir / "cost.csv", ["iteration", "cost"],
                         [{"iteration": k, "cost": c} for k, c in enumerate(hist)], chash)
        (out_dir / "equivalence.json").write_text(json.dumps(report, indent=2, sort_keys=True)
                                                  + "\n")
        write_manifest(out_dir, "sc-demo", config, [path, out_dir / "equivalence.json"])
    return report
