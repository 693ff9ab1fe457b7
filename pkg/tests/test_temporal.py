import numpy as np
import pytest

from longlens.errors import (
    DegenerateTimesError,
    EmptySequenceError,
    InsufficientHistoryError,
    NegativeDeltaError,
)
from longlens.metrics import delta_ssim, mae, psnr, ssim
from longlens.raster import GrayImage, Scale, ValidityMask
from longlens.temporal import (
    EMBED_DIM,
    DeltaEmbedding,
    EyeSequence,
    Frame,
    Laterality,
    copy_last,
    delta_embedding,
    frequencies,
    linear_spline,
)


def make_seq(levels_and_times, size=6):
    frames = []
    for lvl, t in levels_and_times:
        img = GrayImage(np.full((size, size), lvl, dtype=float), Scale.UNIT)
        frames.append(Frame(img, ValidityMask(np.ones((size, size), bool)), t))
    return EyeSequence("eye", tuple(frames))


class TestSequence:
    def test_requires_frames(self):
        with pytest.raises(EmptySequenceError):
            EyeSequence("e", ())

    def test_times_strictly_increasing(self):
        with pytest.raises(ValueError):
            make_seq([(0.1, 0.0), (0.2, 0.0)])

    def test_dims_must_match(self):
        a = Frame(
            GrayImage(np.zeros((4, 4)), Scale.UNIT),
            ValidityMask(np.ones((4, 4), bool)),
            0.0,
        )
        b = Frame(
            GrayImage(np.zeros((5, 5)), Scale.UNIT),
            ValidityMask(np.ones((5, 5), bool)),
            1.0,
        )
        with pytest.raises(ValueError):
            EyeSequence("e", (a, b))


class TestCopyLast:
    def test_returns_last_frame(self):
        seq = make_seq([(0.1, 0.0), (0.7, 1.0)])
        out = copy_last(seq, 2.0)
        assert out is seq.frames[-1].image

    def test_single_frame(self):
        seq = make_seq([(0.3, 0.0)])
        assert copy_last(seq, 0.0) is seq.frames[0].image

    def test_perfect_when_target_equals_last(self):
        rng = np.random.default_rng(0)
        px = rng.random((8, 8))
        img = GrayImage(px, Scale.UNIT)
        m = ValidityMask(np.ones((8, 8), bool))
        seq = EyeSequence("e", (Frame(img, m, 0.0),))
        pred = copy_last(seq, 1.0)
        assert mae(pred, img, m) == 0.0
        assert psnr(pred, img, m) == float("inf")
        assert ssim(pred, img) == pytest.approx(1.0, abs=1e-12)
        assert delta_ssim(pred, img, img, m) == pytest.approx(1.0, abs=1e-12)


class TestLinearSpline:
    def test_extrapolation(self):
        seq = make_seq([(0.2, 0.0), (0.4, 1.0)])
        out = linear_spline(seq, 2.0)
        assert np.allclose(out.pixels, 0.6, atol=1e-12)

    def test_zero_gap_returns_last(self):
        seq = make_seq([(0.2, 0.0), (0.4, 1.0)])
        out = linear_spline(seq, 1.0)
        assert np.array_equal(out.pixels, seq.frames[-1].image.pixels)

    def test_clamped(self):
        seq = make_seq([(0.5, 0.0), (0.9, 1.0)])
        out = linear_spline(seq, 2.0)  # unclamped 1.3
        assert np.all(out.pixels == 1.0)

    def test_reduces_to_copy_last_on_flat_history(self):
        seq = make_seq([(0.4, 0.0), (0.4, 1.0)])
        out = linear_spline(seq, 5.0)
        assert np.array_equal(out.pixels, seq.frames[-1].image.pixels)

    def test_matches_per_pixel_line_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.random((6, 6)) * 0.4 + 0.3
        b = rng.random((6, 6)) * 0.4 + 0.3
        m = ValidityMask(np.ones((6, 6), bool))
        seq = EyeSequence(
            "e",
            (
                Frame(GrayImage(b, Scale.UNIT), m, 0.5),
                Frame(GrayImage(a, Scale.UNIT), m, 1.25),
            ),
        )
        t_star = 1.5
        out = linear_spline(seq, t_star)
        for y in range(6):
            for x in range(6):
                expect = np.interp(
                    t_star, [0.5, 1.25], [b[y, x], a[y, x]],
                ) if t_star <= 1.25 else a[y, x] + (a[y, x] - b[y, x]) * (t_star - 1.25) / 0.75
                assert abs(out.pixels[y, x] - expect) < 1e-12

    def test_errors(self):
        with pytest.raises(InsufficientHistoryError):
            linear_spline(make_seq([(0.1, 0.0)]), 1.0)
        m = ValidityMask(np.ones((4, 4), bool))
        f0 = Frame(GrayImage(np.zeros((4, 4)), Scale.UNIT), m, 0.0)
        f1 = Frame(GrayImage(np.zeros((4, 4)), Scale.UNIT), m, 1.0)
        seq = EyeSequence("e", (f0, f1))
        hacked = EyeSequence("e", (f0, Frame(f1.image, f1.mask, 1.0)))
        # same timestamps cannot be constructed; emulate via direct call
        with pytest.raises(DegenerateTimesError):
            object.__setattr__(hacked.frames[1], "t", 0.0)
            linear_spline(hacked, 2.0)


class TestDeltaEmbedding:
    def test_zero_delta_alternates(self):
        e = delta_embedding(0.0)
        assert np.array_equal(e.values[0::2], np.zeros(128))
        assert np.array_equal(e.values[1::2], np.ones(128))

    def test_analytic_first_pair(self):
        e = delta_embedding(np.e - 1.0)
        assert e.values[0] == pytest.approx(np.sin(1.0), abs=1e-12)
        assert e.values[1] == pytest.approx(np.cos(1.0), abs=1e-12)

    def test_frequency_endpoints(self):
        f = frequencies()
        assert f[0] == pytest.approx(1.0, abs=1e-12)
        assert f[127] == pytest.approx(0.01, abs=1e-12)
        assert np.all(np.diff(f) < 0)

    def test_pair_norms(self):
        for dt in np.linspace(0.0, 20.0, 41):
            v = delta_embedding(float(dt)).values
            norms = v[0::2] ** 2 + v[1::2] ** 2
            assert np.allclose(norms, 1.0, atol=1e-12)

    def test_injective_on_grid(self):
        grid = np.arange(0.0, 10.01, 0.1)
        embs = np.array([delta_embedding(float(t)).values for t in grid])
        for i in range(len(grid)):
            for j in range(i + 1, len(grid)):
                assert np.linalg.norm(embs[i] - embs[j]) > 0

    def test_negative_raises(self):
        with pytest.raises(NegativeDeltaError):
            delta_embedding(-0.1)

    def test_embedding_shape_enforced(self):
        with pytest.raises(ValueError):
            DeltaEmbedding(np.zeros(10))
        assert delta_embedding(1.0).values.shape == (EMBED_DIM,)


def test_laterality_enum():
    assert Laterality("left") is Laterality.LEFT
