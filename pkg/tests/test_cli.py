import csv
import json

import numpy as np
import pytest

from osr import cli
from osr.checkpoint import load_checkpoint, save_checkpoint
from osr.linalg import Rng
from osr.model import PARAM_NAMES, RnnModel
from osr.patching import PatchGeometry

from conftest import DATA, identity_model

SMALL = ["--set", "n_n=16", "--set", "L_t=7", "--set", "N_x=7", "--set", "patches_per_epoch=64",
         "--set", "batch_size=16"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def pair(tmp_path):
    assert run("synth-pairs", "chessboard", "--size", 48, "--cell", 8, "--seed", 3,
               "--out", tmp_path / "pair") == 0
    return tmp_path / "pair"


class TestParser:
    def test_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("--help")
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for name in ("degrade", "train", "restore", "eval", "sweep-noise", "sample-size",
                     "mismatch", "synth-pairs", "sc-demo"):
            assert name in out

    def test_bad_mode_rejected(self, tmp_path):
        with pytest.raises(SystemExit):
            run("train", "--clean", "a", "--degraded", "b", "--mode", "p2q", "--out", tmp_path)

    def test_config_error_reports_line(self, tmp_path, pair, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("lr = 1e-3\nwidth = 9\n")
        code = run("train", "--clean", pair / "clean.png", "--degraded", pair / "degraded.png",
                   "--config", cfg, "--out", tmp_path / "t")
        assert code == 2
        assert f"{cfg}:2: unknown key 'width'" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert run("degrade", tmp_path / "nope.png", "--out", tmp_path / "o") == 2
        assert "nope.png" in capsys.readouterr().err


class TestTrainRestore:
    def test_zero_epochs_checkpoint_is_init(self, pair, tmp_path):
        code = run("train", "--clean", pair / "clean.png", "--degraded", pair / "degraded.png",
                   "--set", "epochs_stage1=0", *SMALL, "--seed", 4, "--out", tmp_path / "t")
        assert code == 0
        model = load_checkpoint(tmp_path / "t" / "model.osr")
        ref = RnnModel.init(PatchGeometry(7, 7), 16, Rng(4).spawn(1), np.float32)
        for k in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(model, k), getattr(ref, k))

    def test_flags_reach_the_model(self, pair, tmp_path):
        code = run("train", "--clean", pair / "clean.png", "--degraded", pair / "degraded.png",
                   "--set", "epochs_stage1=1", *SMALL, "--mode", "p2x", "--loss", "l1", "--gan",
                   "--set", "epochs_stage2=1", "--set", "disc_hidden=8", "--out", tmp_path / "t")
        assert code == 0
        model = load_checkpoint(tmp_path / "t" / "model.osr")
        tc = model.meta["train_config"]
        assert model.geom.mode == "p2x" and tc["loss"] == "l1" and tc["epochs_stage2"] == 1
        with open(tmp_path / "t" / "loss.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["stage"] for r in rows] == ["1", "2"]
        assert "config_hash" in rows[0] and "seconds" not in rows[0]
        timings = json.loads((tmp_path / "t" / "timings.json").read_text())
        assert len(timings["epoch_seconds"]) == 2

    def test_gan_default_epochs(self, pair, tmp_path):
        args = cli.build_parser().parse_args(["train", "--clean", "c", "--degraded", "d", "--gan",
                                              "--out", str(tmp_path)])
        assert cli.load_run_config(args).train.epochs_stage2 == cli.GAN_DEFAULT_EPOCHS

    def test_restore_identity(self, pair, tmp_path):
        ckpt = tmp_path / "id.osr"
        save_checkpoint(identity_model(), ckpt)
        assert run("restore", ckpt, pair / "degraded.png", "--truth", pair,
                   "--out", tmp_path / "r") == 0
        assert ((tmp_path / "r" / "degraded.png").read_bytes()
                == (pair / "degraded.png").read_bytes())

    def test_restore_mode_mismatch(self, pair, tmp_path, capsys):
        ckpt = tmp_path / "id.osr"
        save_checkpoint(identity_model(), ckpt)
        assert run("restore", ckpt, pair / "clean.png", "--mode", "p2x",
                   "--out", tmp_path / "r") == 2
        assert "p2p" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, pair, tmp_path):
        bad = tmp_path / "bad.osr"
        bad.write_bytes(b"OSR1garbage")
        assert run("restore", bad, pair / "clean.png", "--out", tmp_path / "r") == 2


class TestStudies:
    def test_degrade_is_deterministic(self, tmp_path):
        src = DATA / "heldout" / "coins.png"
        for tag in "ab":
            assert run("degrade", src, "--seed", 7, "--out", tmp_path / tag) == 0
        assert (tmp_path / "a" / "coins.png").read_bytes() == \
            (tmp_path / "b" / "coins.png").read_bytes()
        assert (tmp_path / "a" / "run.json").read_bytes() != b""

    def test_eval_and_sweep(self, tmp_path, capsys):
        ckpt = tmp_path / "id.osr"
        save_checkpoint(identity_model(noise_sigma=1.0), ckpt)
        assert run("eval", ckpt, DATA / "heldout" / "coins.png", "--out", tmp_path / "e") == 0
        assert "mean" in capsys.readouterr().out
        assert run("sweep-noise", ckpt, DATA / "heldout" / "coins.png", "--sigmas", "0,1,4",
                   "--out", tmp_path / "s") == 0
        lines = (tmp_path / "s" / "sweep_noise.csv").read_text().splitlines()
        assert lines[0] == "sigma_n,psnr_db,ssim,config_hash" and len(lines) == 4

    def test_mismatch_exit_code(self, tmp_path):
        ckpt = tmp_path / "id.osr"
        save_checkpoint(identity_model(blur_sigma=2.0), ckpt)
        assert run("mismatch", ckpt, DATA / "heldout" / "camera.png", "--sigma-t", "1,2",
                   "--out", tmp_path / "m") == 0
        assert run("mismatch", ckpt, DATA / "heldout" / "camera.png", "--sigma-t", "1",
                   "--threshold", "0", "--out", tmp_path / "m0") == 1

    def test_sample_size_too_many(self, pair, tmp_path, capsys):
        code = run("sample-size", "--clean", pair / "clean.png", "--degraded",
                   pair / "degraded.png", "--m", "100000", "--delta-m", "0.01",
                   "--eval", pair / "clean.png", *SMALL, "--out", tmp_path / "ss")
        assert code == 2 and "exceeds" in capsys.readouterr().err

    def test_sc_demo(self, tmp_path, capsys):
        assert run("sc-demo", "--iters", 50, "--checks", 20, "--out", tmp_path) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["monotone"] and rep["equivalence_max_deviation"] < 1e-12
        assert (tmp_path / "cost.csv").read_text().count("\n") == 52
