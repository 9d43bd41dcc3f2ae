import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osr.images import PlanarImage, rgb_to_ycbcr
from osr.linalg import Rng
from osr.metrics import compute_metrics, psnr, ssim


def ssim_loops(x, y, win=8, L=255.0):
    """Window-by-window SSIM with population statistics."""
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for i in range(x.shape[0] - win + 1):
        for j in range(x.shape[1] - win + 1):
            a = x[i:i + win, j:j + win].ravel()
            b = y[i:i + win, j:j + win].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = ((a - ma) ** 2).mean(), ((b - mb) ** 2).mean()
            cov = ((a - ma) * (b - mb)).mean()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2)
                        / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def structured(h=48, w=48):
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return 127.5 + 100 * np.sin(i / 3.0) * np.cos(j / 5.0)


class TestPsnr:
    def test_constant_offset(self):
        ref = Rng(0).uniform(32 * 32, 20, 200).reshape(32, 32)
        assert psnr(ref, ref + 16) == pytest.approx(10 * math.log10(255 ** 2 / 256), abs=1e-12)
        assert abs(psnr(ref, ref + 16) - 24.05) <= 0.01

    def test_identical_is_infinite(self):
        ref = Rng(1).uniform(100).reshape(10, 10)
        assert psnr(ref, ref) == math.inf

    def test_direct_formula(self):
        rng = Rng(2)
        a, b = rng.uniform(64, 0, 255).reshape(8, 8), rng.uniform(64, 0, 255).reshape(8, 8)
        mse = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / 64
        assert psnr(a, b) == pytest.approx(10 * math.log10(255 ** 2 / mse), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_identical_exactly_one(self):
        x = Rng(3).uniform(40 * 40, 0, 255).reshape(40, 40)
        assert ssim(x, x.copy()) == 1.0

    def test_against_loops(self):
        rng = Rng(4)
        x = rng.uniform(20 * 17, 0, 255).reshape(20, 17)
        y = x + 20 * rng.normal(x.size).reshape(x.shape)
        assert ssim(x, y) == pytest.approx(ssim_loops(x, y), abs=1e-12)

    def test_inverted_low(self):
        x = structured()
        assert ssim(x, 255 - x) < 0.2

    def test_noise_lowers(self):
        x = structured()
        noisy = x + 10 * Rng(5).normal(x.size).reshape(x.shape)
        noisier = x + 30 * Rng(5).normal(x.size).reshape(x.shape)
        assert 1 > ssim(x, noisy) > ssim(x, noisier)

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((7, 20)), np.zeros((7, 20)))

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_and_bounded(self, seed):
        rng = Rng(seed)
        a = rng.uniform(12 * 12, 0, 255).reshape(12, 12)
        b = rng.uniform(12 * 12, 0, 255).reshape(12, 12)
        s = ssim(a, b)
        assert -1.0 <= s <= 1.0
        assert s == pytest.approx(ssim(b, a), abs=1e-14)


class TestComputeMetrics:
    def test_uses_luminance(self):
        rng = Rng(6)
        rgb = PlanarImage(rng.uniform(3 * 16 * 16, 0, 255).reshape(3, 16, 16), "RGB")
        shifted = PlanarImage(rgb.planes + 16, "RGB")
        m = compute_metrics(rgb, shifted)
        y_ref = rgb_to_ycbcr(rgb).planes[0]
        y_est = rgb_to_ycbcr(shifted).planes[0]
        assert m.psnr_db == pytest.approx(psnr(y_ref, y_est), rel=1e-12)
        assert m.psnr_db == pytest.approx(10 * math.log10(255 ** 2 / 256), abs=1e-9)

    def test_identical_images(self):
        img = PlanarImage.gray(structured())
        m = compute_metrics(img, img.copy())
        assert m.psnr_db == math.inf and m.ssim == 1.0

    def test_bare_planes(self):
        x = structured()
        assert compute_metrics(x, x + 16).psnr_db == pytest.approx(24.0484, abs=1e-4)
