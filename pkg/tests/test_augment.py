import math

import numpy as np
import pytest

from oodkit import (
    AugmentSpec,
    DomainError,
    FormatError,
    GridPoolFeaturizer,
    LinearHead,
    ShapeError,
    TtaConfig,
    augment,
    cutout,
    flip,
    jitter,
    random_crop_resize,
    read_pgm,
    rectified_forward,
    rotate,
    tta_predict,
    write_pgm,
)


class ZeroRng:
    """Stub generator whose offsets always land at the origin."""

    def integers(self, low, high):
        return low

    def random(self):
        return 0.0

    def uniform(self, low, high):
        return low


def bilinear_oracle(src, out_h, out_w):
    """Straightforward loop bilinear interpolation (align-corners mapping)."""
    sh, sw = src.shape
    out = np.zeros((out_h, out_w))
    for r in range(out_h):
        for c in range(out_w):
            y = r * (sh - 1) / (out_h - 1) if out_h > 1 else 0.0
            x = c * (sw - 1) / (out_w - 1) if out_w > 1 else 0.0
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            y1, x1 = min(y0 + 1, sh - 1), min(x0 + 1, sw - 1)
            fy, fx = y - y0, x - x0
            out[r, c] = (
                src[y0, x0] * (1 - fy) * (1 - fx)
                + src[y0, x1] * (1 - fy) * fx
                + src[y1, x0] * fy * (1 - fx)
                + src[y1, x1] * fy * fx
            )
    return out


def random_image(rng, h=None, w=None):
    h = h or int(rng.integers(4, 12))
    w = w or int(rng.integers(4, 12))
    return rng.uniform(0, 1, size=(h, w))


QUAD = np.array([[0.1, 0.2], [0.3, 0.4]])


class TestFlip:
    def test_horizontal_definition(self):
        out = flip(QUAD, "horizontal")
        assert np.array_equal(out, [[0.2, 0.1], [0.4, 0.3]])

    def test_involution(self):
        rng = np.random.default_rng(0)
        img = random_image(rng)
        for axis in ("horizontal", "vertical"):
            assert np.array_equal(flip(flip(img, axis), axis), img)

    def test_single_pixel_fixed_point(self):
        img = np.array([[0.5]])
        assert np.array_equal(flip(img, "horizontal"), img)

    def test_bad_axis(self):
        with pytest.raises(DomainError):
            flip(QUAD, "diagonal")


class TestRotate:
    def test_quarter_turn_clockwise(self):
        out = rotate(QUAD, 90)
        assert np.array_equal(out, [[0.3, 0.1], [0.4, 0.2]])

    def test_zero_is_identity(self):
        rng = np.random.default_rng(1)
        img = random_image(rng)
        assert np.array_equal(rotate(img, 0), img)

    def test_four_quarter_turns_identity(self):
        rng = np.random.default_rng(2)
        img = random_image(rng)
        out = img
        for _ in range(4):
            out = rotate(out, 90)
        assert np.array_equal(out, img)

    def test_nonfinite_angle(self):
        with pytest.raises(DomainError):
            rotate(QUAD, math.nan)

    def test_generic_angle_preserves_shape_and_range(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            img = random_image(rng)
            out = rotate(img, float(rng.uniform(-180, 180)))
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_generic_path_agrees_with_permutation_at_90(self):
        # 90.0 takes the exact path; 90.0000001 must land within a pixel of it.
        rng = np.random.default_rng(4)
        img = random_image(rng, 9, 9)
        exact = rotate(img, 90.0)
        near = rotate(img, 90.0 + 1e-7)
        assert np.array_equal(exact, near)


class TestJitter:
    def test_unit_factors_identity(self):
        rng = np.random.default_rng(5)
        img = random_image(rng)
        assert np.array_equal(jitter(img, 1.0, 1.0), img)

    def test_contrast_noop_on_constant_image(self):
        img = np.full((3, 3), 0.5)
        out = jitter(img, 1.1, 1.7)
        assert out == pytest.approx(np.full((3, 3), 0.55), abs=1e-12)

    def test_brightness_clamps(self):
        img = np.full((2, 2), 0.95)
        out = jitter(img, 1.2, 1.0)
        assert np.array_equal(out, np.ones((2, 2)))

    def test_nonpositive_factor(self):
        with pytest.raises(DomainError):
            jitter(QUAD, 0.0, 1.0)
        with pytest.raises(DomainError):
            jitter(QUAD, 1.0, -0.5)


class TestRandomCropResize:
    def test_full_fraction_identity(self):
        rng = np.random.default_rng(6)
        img = random_image(rng)
        assert np.array_equal(random_crop_resize(img, 1.0, np.random.default_rng(0)), img)

    def test_constant_image_unchanged(self):
        img = np.full((6, 6), 0.375)
        out = random_crop_resize(img, 0.5, np.random.default_rng(1))
        assert np.allclose(out, img, atol=1e-12)

    def test_matches_bilinear_oracle_at_origin(self):
        ramp = np.linspace(0, 1, 16).reshape(4, 4)
        out = random_crop_resize(ramp, 0.5, ZeroRng())
        expected = bilinear_oracle(ramp[:2, :2], 4, 4)
        assert np.allclose(out, expected, atol=1e-12)

    def test_matches_bilinear_oracle_random_windows(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            img = random_image(rng, 8, 10)
            out = random_crop_resize(img, 0.6, ZeroRng())
            expected = bilinear_oracle(img[:4, :6], 8, 10)
            assert np.allclose(out, expected, atol=1e-12)

    def test_window_below_one_pixel(self):
        with pytest.raises(DomainError):
            random_crop_resize(QUAD, 0.25, np.random.default_rng(0))

    def test_fraction_domain(self):
        with pytest.raises(DomainError):
            random_crop_resize(QUAD, 1.5, np.random.default_rng(0))


class TestCutout:
    def test_hole_area(self):
        img = np.ones((4, 4))
        out = cutout(img, 0.5, ZeroRng())
        assert out.sum() == 12.0
        assert np.array_equal(out[:2, :2], np.zeros((2, 2)))

    def test_full_hole_blanks_image(self):
        img = np.ones((4, 4))
        out = cutout(img, 1.0, np.random.default_rng(0))
        assert np.array_equal(out, np.zeros((4, 4)))

    def test_never_brightens(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            img = random_image(rng)
            out = cutout(img, 0.4, rng)
            assert np.all(out <= img)

    def test_hole_below_one_pixel(self):
        with pytest.raises(DomainError):
            cutout(np.ones((8, 8)), 0.1, np.random.default_rng(0))


class TestAugment:
    def test_all_disabled_is_identity(self):
        rng = np.random.default_rng(9)
        img = random_image(rng)
        out = augment(img, AugmentSpec.disabled(), np.random.default_rng(0))
        assert np.array_equal(out, img)

    def test_seeded_determinism(self):
        rng = np.random.default_rng(10)
        img = random_image(rng, 10, 10)
        spec = AugmentSpec(seed=3)
        a = augment(img, spec, np.random.default_rng(3))
        b = augment(img, spec, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_shape_and_range_preserved(self):
        rng = np.random.default_rng(11)
        spec = AugmentSpec()
        for _ in range(30):
            img = random_image(rng, 8, 8)
            out = augment(img, spec, rng)
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_spec_validation(self):
        with pytest.raises(DomainError):
            AugmentSpec(crop_fraction=0.0)
        with pytest.raises(DomainError):
            AugmentSpec(brightness_range=(1.2, 0.8))


class TestGridPoolFeaturizer:
    def test_feature_dim(self):
        assert GridPoolFeaturizer(grid=4).feature_dim == 16

    def test_constant_image(self):
        feats = GridPoolFeaturizer(grid=2)(np.full((6, 6), 0.25))
        assert np.allclose(feats, 0.25, atol=1e-15)

    def test_too_small_image(self):
        with pytest.raises(ShapeError):
            GridPoolFeaturizer(grid=4)(np.ones((2, 2)))

    def test_block_means(self):
        img = np.kron(np.array([[0.0, 1.0], [0.5, 0.25]]), np.ones((3, 3)))
        feats = GridPoolFeaturizer(grid=2)(img)
        assert np.allclose(feats, [0.0, 1.0, 0.5, 0.25], atol=1e-15)


def toy_head(feature_dim):
    rng = np.random.default_rng(99)
    return LinearHead(
        weights=rng.standard_normal((feature_dim, 3)), bias=rng.standard_normal(3)
    )


class TestTtaPredict:
    def test_single_identity_view_equals_plain_forward(self):
        rng = np.random.default_rng(12)
        img = random_image(rng, 8, 8)
        featurizer = GridPoolFeaturizer(grid=4)
        head = toy_head(16)
        cfg = TtaConfig(iterations=1, include_identity=True, seed=0)
        fused = tta_predict(img, featurizer, head, math.inf, cfg=cfg)
        plain = rectified_forward(featurizer(img)[None, :], head, math.inf)
        assert np.array_equal(fused, plain)

    def test_augmentation_invariant_featurizer_collapses_tta(self):
        rng = np.random.default_rng(13)
        img = random_image(rng, 8, 8)
        head = toy_head(4)

        def constant_featurizer(_):
            return np.array([0.25, 0.5, 0.75, 1.0])

        single = tta_predict(
            img, constant_featurizer, head, math.inf, cfg=TtaConfig(iterations=1)
        )
        for k in (4, 16):
            fused = tta_predict(
                img, constant_featurizer, head, math.inf, cfg=TtaConfig(iterations=k)
            )
            assert np.allclose(fused, single, rtol=1e-15)

    def test_seeded_determinism(self):
        rng = np.random.default_rng(14)
        img = random_image(rng, 8, 8)
        featurizer = GridPoolFeaturizer(grid=4)
        head = toy_head(16)
        cfg = TtaConfig(iterations=8, seed=21)
        a = tta_predict(img, featurizer, head, 1.0, cfg=cfg)
        b = tta_predict(img, featurizer, head, 1.0, cfg=cfg)
        assert np.array_equal(a, b)

    def test_variance_non_increasing_in_iterations(self):
        rng = np.random.default_rng(15)
        img = random_image(rng, 12, 12)
        featurizer = GridPoolFeaturizer(grid=4)
        head = toy_head(16)
        spec = AugmentSpec()
        variances = []
        for k in (1, 8, 32):
            rows = np.concatenate(
                [
                    tta_predict(
                        img,
                        featurizer,
                        head,
                        math.inf,
                        cfg=TtaConfig(iterations=k, include_identity=False, seed=s),
                        spec=spec,
                    )
                    for s in range(60)
                ],
                axis=0,
            )
            variances.append(rows.var(axis=0).mean())
        assert variances[0] > variances[1] > variances[2]

    def test_iterations_domain(self):
        with pytest.raises(DomainError):
            TtaConfig(iterations=0)


class TestPgm:
    def test_roundtrip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(16)
        img = random_image(rng, 7, 9)
        write_pgm(img, tmp_path / "img.pgm")
        back = read_pgm(tmp_path / "img.pgm")
        assert back.shape == img.shape
        assert np.all(np.abs(back - img) <= 0.5 / 255 + 1e-12)

    def test_quantized_roundtrip_exact(self, tmp_path):
        img = np.arange(16).reshape(4, 4) / 255.0
        write_pgm(img, tmp_path / "img.pgm")
        assert np.array_equal(read_pgm(tmp_path / "img.pgm"), img)

    def test_header_with_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        img = read_pgm(path)
        assert img.shape == (2, 2)
        assert img[0, 1] == 1.0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "p2.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 1 2 3")
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 1]))
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_sixteen_bit_rejected(self, tmp_path):
        path = tmp_path / "wide.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n" + bytes([0, 0]))
        with pytest.raises(FormatError):
            read_pgm(path)
