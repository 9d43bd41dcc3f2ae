import numpy as np
import pytest

from osr.images import PlanarImage, rgb_to_ycbcr
from osr.linalg import Rng
from osr.model import PARAM_NAMES, RnnModel
from osr.patching import patch_sequences, target_sequences, training_anchors
from osr.resample import upsample_bicubic
from osr.train import TrainConfig, restore, restore_plane, train_one_shot, training_risk

from conftest import identity_model


def small_cfg(**kw):
    base = dict(epochs_stage1=3, n_n=24, batch_size=16, patches_per_epoch=128, L_t=7, N_x=7,
                lr=3e-3, dtype="float64")
    base.update(kw)
    return TrainConfig(**base)


def smooth_plane(h=24, w=24, seed=0):
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    phase = Rng(seed).uniform(2, 0, 6)
    return 128 + 80 * np.sin(i / 4 + phase[0]) * np.cos(j / 5 + phase[1])


class TestConfig:
    @pytest.mark.parametrize("kw", [{"loss": "l3"}, {"epochs_stage1": -1}, {"lambda_adv": -1},
                                    {"sampling": "greedy"}, {"dtype": "float16"}])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_geometry_stride_default(self):
        assert TrainConfig().geometry().stride == 4
        assert TrainConfig(stride=2).geometry().stride == 2


class TestTraining:
    def test_zero_epochs_is_init(self):
        cfg = small_cfg(epochs_stage1=0)
        plane = smooth_plane()
        res = train_one_shot(plane, plane, cfg, Rng(5))
        ref = RnnModel.init(cfg.geometry(), cfg.n_n, Rng(5).spawn(1), np.float64)
        for k in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(res.model, k), getattr(ref, k))
        assert res.history == []

    def test_identity_task_loss_drops_tenfold(self):
        cfg = small_cfg(epochs_stage1=15, sampling="all")
        plane = smooth_plane()
        g = cfg.geometry()
        a = training_anchors(*plane.shape, g)
        inputs = patch_sequences(plane / 255, g, a)
        targets = target_sequences(plane / 255, g, a)
        init = RnnModel.init(g, cfg.n_n, Rng(0).spawn(1), np.float64)
        before = training_risk(init, inputs, targets)
        res = train_one_shot(plane, plane, cfg, Rng(0))
        after = training_risk(res.model, inputs, targets)
        assert after * 10 <= before
        losses = [h["loss"] for h in res.history]
        assert losses[-1] < losses[0]

    def test_deterministic(self):
        cfg = small_cfg()
        a = train_one_shot(smooth_plane(seed=1), smooth_plane(seed=2), cfg)
        b = train_one_shot(smooth_plane(seed=1), smooth_plane(seed=2), cfg)
        for k in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(a.model, k), getattr(b.model, k))

    def test_history_fields(self):
        res = train_one_shot(smooth_plane(), smooth_plane(), small_cfg(epochs_stage1=2))
        assert [h["epoch"] for h in res.history] == [1, 2]
        for h in res.history:
            assert 0 <= h["latent_zero_fraction"] <= 1 and h["stage"] == 1

    def test_target_risk_stops_early(self):
        cfg = small_cfg(epochs_stage1=50, sampling="fixed", target_risk=1.0)
        res = train_one_shot(smooth_plane(), smooth_plane(), cfg)
        assert len(res.history) == 1 and res.history[0]["risk"] <= 1.0

    def test_fixed_anchor_subset(self):
        plane = smooth_plane()
        anchors = training_anchors(*plane.shape, small_cfg().geometry())[:10]
        res = train_one_shot(plane, plane, small_cfg(sampling="fixed"), anchors=anchors)
        assert "risk" in res.history[-1]

    def test_adversarial_stage(self):
        res = train_one_shot(smooth_plane(), smooth_plane(), small_cfg(epochs_stage1=1,
                             epochs_stage2=2, disc_hidden=8, residual=True))
        assert res.discriminator is not None
        assert [h["stage"] for h in res.history] == [1, 2, 2]
        assert all(np.isfinite(h["d_loss"]) for h in res.history[1:])

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            train_one_shot(np.zeros((20, 20)), np.zeros((20, 21)), small_cfg())

    def test_meta_recorded(self):
        res = train_one_shot(smooth_plane(), smooth_plane(), small_cfg(epochs_stage1=0),
                             meta={"decimation": 1})
        assert res.model.meta["decimation"] == 1
        assert res.model.meta["train_config"]["n_n"] == 24


class TestRestore:
    @pytest.mark.parametrize("mode", ["p2p", "p2x"])
    def test_identity_model(self, mode):
        plane = Rng(1).uniform(30 * 26, 0, 255).reshape(30, 26)
        np.testing.assert_allclose(restore_plane(identity_model(mode=mode), plane), plane,
                                   atol=1e-10)

    def test_stride_override(self):
        plane = smooth_plane()
        m = identity_model()
        np.testing.assert_allclose(restore_plane(m, plane, stride=1), plane, atol=1e-10)

    def test_residual_adds_input(self):
        m = identity_model()
        m.residual = True
        plane = smooth_plane()
        np.testing.assert_allclose(restore_plane(m, plane), 2 * plane, atol=1e-10)

    def test_too_small(self):
        with pytest.raises(ValueError):
            restore_plane(identity_model(), np.zeros((8, 20)))

    def test_mode_mismatch(self):
        with pytest.raises(ValueError):
            restore(identity_model(mode="p2p"), PlanarImage.gray(smooth_plane()), mode="p2x")

    def test_deblur_passes_chroma(self):
        rgb = PlanarImage(np.stack([smooth_plane(seed=s) for s in range(3)]), "RGB")
        out = restore(identity_model(), rgb)
        assert out.colorspace == "RGB"
        np.testing.assert_allclose(out.planes, rgb.planes, atol=1e-9)

    def test_zero_decoder_sr_is_bicubic(self):
        m = identity_model(decimation=3)
        m.W_xz[...] = 0
        m.residual = True
        rgb = PlanarImage(np.stack([smooth_plane(12, 14, seed=s) for s in range(3)]), "RGB")
        out = restore(m, rgb)
        ycc = rgb_to_ycbcr(rgb).planes
        expected = np.stack([upsample_bicubic(p, 3) for p in ycc])
        np.testing.assert_allclose(rgb_to_ycbcr(out).planes, expected, atol=1e-9)

    def test_gray_stays_gray(self):
        out = restore(identity_model(), PlanarImage.gray(smooth_plane()))
        assert out.colorspace == "Gray"
