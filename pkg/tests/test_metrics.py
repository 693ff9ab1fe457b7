import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longlens.errors import DimensionError, EmptyMaskError, RegionTooSmallError
from longlens.metrics import (
    DELTA_SSIM_CONFIG,
    SsimConfig,
    change_maps,
    delta_ssim,
    mae,
    masked_ssim,
    psnr,
    ssim,
)
from longlens.raster import GrayImage, Rect, Scale, ValidityMask


def unit(arr):
    return GrayImage(np.asarray(arr, dtype=float), Scale.UNIT)


def full_mask(h, w):
    return ValidityMask(np.ones((h, w), bool))


def naive_ssim(xa, xb, cfg, region=None):
    """Independent sliding-window oracle: per-window two-pass statistics."""
    if region is not None:
        xa = xa[region.slices()]
        xb = xb[region.slices()]
    w = cfg.window
    c1, c2 = cfg.c1, cfg.c2
    vals = []
    for y in range(xa.shape[0] - w + 1):
        for x in range(xa.shape[1] - w + 1):
            wa = xa[y : y + w, x : x + w]
            wb = xb[y : y + w, x : x + w]
            mu_a, mu_b = wa.mean(), wb.mean()
            va = ((wa - mu_a) ** 2).mean()
            vb = ((wb - mu_b) ** 2).mean()
            cov = ((wa - mu_a) * (wb - mu_b)).mean()
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
            vals.append(num / den)
    return float(np.mean(vals))


class TestMae:
    def test_identical(self):
        img = unit(np.full((8, 8), 0.3))
        assert mae(img, img, full_mask(8, 8)) == 0.0

    def test_constant_error(self):
        a = unit(np.zeros((8, 8)))
        b = unit(np.full((8, 8), 0.1))
        assert mae(a, b, full_mask(8, 8)) == pytest.approx(0.1, abs=1e-15)

    def test_masked_out_error_ignored(self):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        b[0, 0] = 0.9
        bits = np.ones((4, 4), bool)
        bits[0, 0] = False
        assert mae(unit(a), unit(b), ValidityMask(bits)) == 0.0

    def test_errors(self):
        with pytest.raises(DimensionError):
            mae(unit(np.zeros((2, 2))), unit(np.zeros((3, 3))), full_mask(2, 2))
        with pytest.raises(EmptyMaskError):
            mae(unit(np.zeros((2, 2))), unit(np.zeros((2, 2))),
                ValidityMask(np.zeros((2, 2), bool)))


class TestPsnr:
    def test_identical_is_inf(self):
        img = unit(np.full((4, 4), 0.5))
        assert psnr(img, img, full_mask(4, 4)) == float("inf")

    def test_constant_error_range1(self):
        a = unit(np.zeros((4, 4)))
        b = unit(np.full((4, 4), 0.1))
        assert psnr(a, b, full_mask(4, 4)) == pytest.approx(20.0, abs=1e-12)

    def test_constant_error_range2(self):
        a = unit(np.zeros((4, 4)))
        b = unit(np.full((4, 4), 0.1))
        assert psnr(a, b, full_mask(4, 4), data_range=2.0) == pytest.approx(
            10 * np.log10(4 / 0.01), abs=1e-12
        )

    def test_monotone_in_error_scale(self):
        rng = np.random.default_rng(0)
        t = rng.random((8, 8)) * 0.5 + 0.25
        e = (rng.random((8, 8)) - 0.5) * 0.2
        m = full_mask(8, 8)
        p1 = psnr(unit(t + e), unit(t), m)
        p2 = psnr(unit(t + 2 * e), unit(t), m)
        assert p2 < p1


class TestSsim:
    def test_identity(self):
        rng = np.random.default_rng(1)
        img = unit(rng.random((16, 16)))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_constant_closed_form(self):
        a = unit(np.full((8, 8), 0.2))
        b = unit(np.full((8, 8), 0.7))
        c1 = 1e-4
        expect = (2 * 0.2 * 0.7 + c1) / (0.2 ** 2 + 0.7 ** 2 + c1)
        assert ssim(a, b) == pytest.approx(expect, abs=1e-12)
        assert expect == pytest.approx(0.52839, abs=1e-5)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            xa = rng.random((16, 16))
            xb = rng.random((16, 16))
            got = ssim(unit(xa), unit(xb))
            assert got == pytest.approx(naive_ssim(xa, xb, SsimConfig()), abs=1e-9)

    def test_region_restriction_matches_oracle(self):
        rng = np.random.default_rng(3)
        xa, xb = rng.random((20, 20)), rng.random((20, 20))
        region = Rect(2, 5, 10, 12)
        got = ssim(unit(xa), unit(xb), region=region)
        assert got == pytest.approx(naive_ssim(xa, xb, SsimConfig(), region), abs=1e-9)

    def test_region_too_small(self):
        img = unit(np.zeros((8, 8)))
        with pytest.raises(RegionTooSmallError):
            ssim(img, img, region=Rect(0, 0, 5, 8))

    def test_region_out_of_bounds(self):
        img = unit(np.zeros((8, 8)))
        with pytest.raises(DimensionError):
            ssim(img, img, region=Rect(2, 2, 8, 8))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_symmetric_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        xa, xb = rng.random((10, 10)), rng.random((10, 10))
        s1 = ssim(unit(xa), unit(xb))
        s2 = ssim(unit(xb), unit(xa))
        assert s1 == pytest.approx(s2, abs=1e-12)
        assert -1.0 - 1e-12 <= s1 <= 1.0 + 1e-12

    def test_masked_ssim_uses_bbox(self):
        rng = np.random.default_rng(4)
        xa, xb = rng.random((16, 16)), rng.random((16, 16))
        bits = np.zeros((16, 16), bool)
        bits[3:12, 2:14] = True
        got = masked_ssim(unit(xa), unit(xb), ValidityMask(bits))
        assert got == pytest.approx(
            ssim(unit(xa), unit(xb), region=Rect(3, 2, 9, 12)), abs=1e-15
        )


class TestDeltaSsim:
    def test_perfect_prediction(self):
        rng = np.random.default_rng(5)
        target = unit(rng.random((12, 12)))
        last = unit(rng.random((12, 12)))
        got = delta_ssim(target, target, last, full_mask(12, 12))
        assert got == pytest.approx(1.0, abs=1e-12)

    def test_copy_last_constant_change_closed_form(self):
        last = unit(np.full((12, 12), 0.4))
        target = unit(np.full((12, 12), 0.5))  # delta_gt = 0.1 everywhere
        pred = last  # delta_pred = 0
        c1 = (0.01 * 2.0) ** 2
        expect = c1 / (0.1 ** 2 + c1)
        got = delta_ssim(pred, target, last, full_mask(12, 12))
        assert got == pytest.approx(expect, abs=1e-9)
        assert expect == pytest.approx(0.03846, abs=1e-5)

    def test_outside_bbox_ignored(self):
        rng = np.random.default_rng(6)
        bits = np.zeros((16, 16), bool)
        bits[0:10, 0:10] = True
        mask = ValidityMask(bits)
        last = rng.random((16, 16))
        target = rng.random((16, 16))
        pred = rng.random((16, 16))
        base = delta_ssim(unit(pred), unit(target), unit(last), mask)
        pred2, target2, last2 = pred.copy(), target.copy(), last.copy()
        pred2[12:, 12:] = 0.9
        target2[12:, 12:] = 0.1
        last2[12:, 12:] = 0.5
        got = delta_ssim(unit(pred2), unit(target2), unit(last2), mask)
        assert got == base

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        pred = rng.random((12, 12)) * 0.5
        target = rng.random((12, 12)) * 0.5
        last = rng.random((12, 12)) * 0.5
        m = full_mask(12, 12)
        base = delta_ssim(unit(pred), unit(target), unit(last), m)
        shifted = delta_ssim(
            unit(pred + 0.3), unit(target + 0.3), unit(last + 0.3), m
        )
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_requires_range_2(self):
        img = unit(np.zeros((8, 8)))
        with pytest.raises(ValueError):
            delta_ssim(img, img, img, full_mask(8, 8), SsimConfig(data_range=1.0))

    def test_change_maps_fields(self):
        last = unit(np.full((8, 8), 0.2))
        target = unit(np.full((8, 8), 0.5))
        pred = unit(np.full((8, 8), 0.3))
        maps = change_maps(pred, target, last, full_mask(8, 8))
        assert np.allclose(maps.delta_gt, 0.3)
        assert np.allclose(maps.delta_pred, 0.1)
        assert (maps.bbox.height, maps.bbox.width) == (8, 8)


def test_perfect_prediction_all_metrics_agree():
    rng = np.random.default_rng(8)
    target = unit(rng.random((12, 12)))
    last = unit(rng.random((12, 12)))
    m = full_mask(12, 12)
    assert mae(target, target, m) == 0.0
    assert psnr(target, target, m) == float("inf")
    assert ssim(target, target) == pytest.approx(1.0, abs=1e-12)
    assert delta_ssim(target, target, last, m) == pytest.approx(1.0, abs=1e-12)
