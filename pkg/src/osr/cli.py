"""``osr`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, harness
from .checkpoint import CheckpointFormatError, load_checkpoint
from .config import ConfigError, RunConfig, format_config, load_config, parse_config
from .images import ImageFormatError, load_image

log = logging.getLogger("osr")

GAN_DEFAULT_EPOCHS = 10


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def load_run_config(args) -> RunConfig:
    """Config file, then ``--set`` overrides, then the dedicated flags."""
    run = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    sets = getattr(args, "set", None) or []
    if sets:
        values = run.to_dict()
        for item in sets:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            k, v = (s.strip() for s in item.split("=", 1))
            if k not in values:
                raise ConfigError(f"--set: unknown key {k!r}")
            values[k] = v
        run = parse_config("".join(f"{k} = {v}\n" for k, v in values.items()), "--set")
    train = run.train
    if getattr(args, "mode", None):
        train = replace(train, mode=args.mode)
    if getattr(args, "loss", None):
        train = replace(train, loss=args.loss)
    if getattr(args, "gan", False) and train.epochs_stage2 == 0:
        train = replace(train, epochs_stage2=GAN_DEFAULT_EPOCHS)
    if getattr(args, "seed", None) is not None:
        train = replace(train, seed=args.seed)
    for flag, key in (("blur_sigma", "blur_sigma"), ("noise_sigma", "noise_sigma"),
                      ("decimation", "decimation")):
        v = getattr(args, flag, None)
        if v is not None:
            run = replace(run, **{key: v})
    return replace(run, train=train)


# ---------------------------------------------------------------- handlers


def cmd_degrade(args):
    run = load_run_config(args)
    recs = harness.degrade_files(harness.list_images(args.input), run, args.seed, args.out,
                                 args.workers)
    failed = [r for r in recs if "error" in r]
    print(f"degraded {len(recs) - len(failed)} image(s) into {args.out}")
    return 1 if failed else 0


def cmd_train(args):
    run = load_run_config(args)
    clean, degraded = load_image(args.clean), load_image(args.degraded)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = harness.train_pair(clean, degraded, run)
    elapsed = time.perf_counter() - t0
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.osr"
    outputs = harness.write_training_outputs(res, run, ckpt, out)
    (out / "config.txt").write_text(format_config(run))
    harness.write_manifest(out, "train", run.to_dict(), outputs + [out / "config.txt"],
                           {"clean": str(args.clean), "degraded": str(args.degraded)},
                           {"train_seconds": elapsed,
                            "epoch_seconds": [h["seconds"] for h in res.history]})
    if res.history:
        print(f"trained {len(res.history)} epoch(s); final loss {res.history[-1]['loss']:.6g}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_restore(args):
    model = load_checkpoint(args.checkpoint)
    rows = harness.restore_files(model, harness.list_images(args.input), args.out, args.truth,
                                 args.workers, args.mode)
    print(f"restored {len(rows)} image(s) into {args.out}")
    if args.truth is not None and rows:
        mean = sum(r["psnr_db"] for r in rows) / len(rows)
        print(f"mean PSNR {mean:.3f} dB")
    return 0


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    rep = harness.evaluate(model, harness.list_images(args.clean), args.seed, args.out,
                           args.workers, args.noise_sigma)
    for r in rep["rows"]:
        print(f"{r['image']:>24}  {r['psnr_db_in']:7.3f} -> {r['psnr_db_out']:7.3f} dB  "
              f"SSIM {r['ssim_in']:.4f} -> {r['ssim_out']:.4f}")
    m = rep["mean"]
    print(f"{'mean':>24}  {m['psnr_db_in']:7.3f} -> {m['psnr_db_out']:7.3f} dB  "
          f"SSIM {m['ssim_in']:.4f} -> {m['ssim_out']:.4f}")
    return 0


def cmd_sweep_noise(args):
    model = load_checkpoint(args.checkpoint)
    rows = harness.sweep_noise(model, load_image(args.clean), args.sigmas, args.seed, args.out)
    for r in rows:
        print(f"sigma_n={r['sigma_n']:g}  PSNR {r['psnr_db']:.3f} dB")
    return 0


def cmd_sample_size(args):
    run = load_run_config(args)
    evals = [load_image(p) for p in harness.list_images(args.eval)]
    rows = harness.sample_size(load_image(args.clean), load_image(args.degraded), args.m,
                               args.delta_m, evals, run, args.seed, args.max_epochs, args.out)
    for r in rows:
        print(f"m={r['m']:>6}  epochs={r['epochs']:>4}  risk={r['training_risk']:.3g}  "
              f"recovery={r['recovery_error']:.4g}")
    return 0


def cmd_mismatch(args):
    model = load_checkpoint(args.checkpoint)
    rows = harness.mismatch(model, load_image(args.clean), args.sigma_t, args.seed,
                            args.noise_sigma, args.column, args.margin, args.threshold, args.out)
    for r in rows:
        print(f"sigma_t={r['sigma_t']:g} sigma_s={r['sigma_s']:g} residual={r['residual_sigma']:.4g}"
              f"  max deviation {r['max_interior_deviation']:.4f}"
              f"  {'pass' if r['passed'] else 'FAIL'}")
    return 0 if all(r["passed"] for r in rows) else 1


def cmd_synth_pairs(args):
    run = load_run_config(args)
    harness.synth_pairs(args.pattern, args.size, args.cell, run, args.seed, args.out)
    print(f"wrote {args.out}/clean.png and {args.out}/degraded.png")
    return 0


def cmd_sc_demo(args):
    rep = harness.sc_demo(args.N, args.M, args.sparsity, args.lam, args.iters, args.seed,
                          args.orthonormal, args.checks, args.out)
    print(json.dumps(rep, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osr", description="One-shot patch-based RNN image "
                                "restoration: degradation, training, restoration, studies.")
    p.add_argument("--version", action="version", version=f"osr {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
        sp.add_argument("--out", required=True, help="output directory")
        return sp

    def config_flags(sp, degradation=True):
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
        if degradation:
            sp.add_argument("--blur-sigma", type=float, help="Gaussian PSF standard deviation")
            sp.add_argument("--noise-sigma", type=float, help="noise std in 0..255 units")
            sp.add_argument("--decimation", type=int, help="downsampling factor")

    def workers(sp):
        sp.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")

    sp = add("degrade", cmd_degrade, "Apply the configured degradation to images.")
    sp.add_argument("input", help="image file or directory")
    config_flags(sp)
    workers(sp)

    sp = add("train", cmd_train, "Train a model on one clean/degraded pair.")
    sp.add_argument("--clean", required=True)
    sp.add_argument("--degraded", required=True)
    sp.add_argument("--checkpoint", help="checkpoint path (default OUT/model.osr)")
    sp.add_argument("--mode", choices=["p2p", "p2x"], help="patch geometry")
    sp.add_argument("--loss", choices=["l1", "l2"], help="stage-1 content loss")
    sp.add_argument("--gan", action="store_true",
                    help=f"run adversarial stage 2 ({GAN_DEFAULT_EPOCHS} epochs unless configured)")
    config_flags(sp)

    sp = add("restore", cmd_restore, "Restore images with a trained checkpoint.")
    sp.add_argument("checkpoint")
    sp.add_argument("input", help="image file or directory")
    sp.add_argument("--truth", help="directory of same-named clean images for metrics")
    sp.add_argument("--mode", choices=["p2p", "p2x"],
                    help="expected patch geometry; refused if the checkpoint differs")
    workers(sp)

    sp = add("eval", cmd_eval, "Score restorations of clean images degraded as in training.")
    sp.add_argument("checkpoint")
    sp.add_argument("clean", help="clean image file or directory")
    sp.add_argument("--noise-sigma", type=float, help="override the training noise level")
    workers(sp)

    sp = add("sweep-noise", cmd_sweep_noise, "Restoration PSNR across input noise levels.")
    sp.add_argument("checkpoint")
    sp.add_argument("clean")
    sp.add_argument("--sigmas", type=_floats, required=True, help="comma-separated noise stds")

    sp = add("sample-size", cmd_sample_size, "Recovery error against training-set size.")
    sp.add_argument("--clean", required=True)
    sp.add_argument("--degraded", required=True)
    sp.add_argument("--m", type=_ints, required=True, help="comma-separated patch counts")
    sp.add_argument("--delta-m", type=float, required=True,
                    help="training stops once the risk reaches this value")
    sp.add_argument("--eval", required=True, help="clean evaluation image or directory")
    sp.add_argument("--max-epochs", type=int, default=500)
    config_flags(sp)

    sp = add("mismatch", cmd_mismatch, "Residual-blur check for mismatched blur levels.")
    sp.add_argument("checkpoint")
    sp.add_argument("clean")
    sp.add_argument("--sigma-t", type=_floats, required=True, help="comma-separated test blurs")
    sp.add_argument("--noise-sigma", type=float, default=0.0)
    sp.add_argument("--column", type=int, default=55)
    sp.add_argument("--margin", type=int, default=12)
    sp.add_argument("--threshold", type=float, default=0.15)

    sp = add("synth-pairs", cmd_synth_pairs, "Write a synthetic clean/degraded training pair.")
    sp.add_argument("pattern", choices=list(harness.PATTERNS))
    sp.add_argument("--size", type=int, default=128)
    sp.add_argument("--cell", type=int, default=16)
    config_flags(sp)

    sp = add("sc-demo", cmd_sc_demo, "ISTA on a random sparse-coding problem.")
    sp.add_argument("--N", type=int, default=8)
    sp.add_argument("--M", type=int, default=16)
    sp.add_argument("--sparsity", type=int, default=3)
    sp.add_argument("--lam", type=float, default=0.1)
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--checks", type=int, default=1000, help="equivalence instances")
    sp.add_argument("--orthonormal", action="store_true", help="square orthonormal dictionary")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointFormatError, ImageFormatError, ValueError,
            FileNotFoundError, KeyError) as exc:
        print(f"osr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
