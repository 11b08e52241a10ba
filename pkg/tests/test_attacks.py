"""Tests for the simulated channel attacks and their surrogate gradients."""

import numpy as np
import pytest

from rfnns.attacks import (
    AttackSpec,
    AttackSuite,
    apply_exact,
    apply_surrogate,
    quant_tables,
)
from rfnns.image_core import image_from_array, psnr

ALL_SPECS = [
    AttackSpec("identity"),
    AttackSpec("jpeg", 80),
    # small variance keeps finite-difference probes clear of the clamp,
    # where the straight-through gradient intentionally diverges from it
    AttackSpec("gaussian_noise", 1e-4, noise_seed=3),
    AttackSpec("contrast", 0.7),
    AttackSpec("scaling", 0.5),
    AttackSpec("rotation", 15.0),
    AttackSpec("gaussian_blur", 1.0),
]


def _smooth_image(side=64):
    y, x = np.mgrid[0:side, 0:side] / side
    return np.stack([0.3 + 0.4 * y, 0.5 + 0.2 * x, 0.4 + 0.1 * (x + y)],
                    axis=2)


class TestSpecs:
    def test_invalid_kind_raises(self):
        with pytest.raises(ValueError):
            AttackSpec("salt_and_pepper", 0.1)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            AttackSpec("jpeg", 0)
        with pytest.raises(ValueError):
            AttackSpec("jpeg", 101)
        with pytest.raises(ValueError):
            AttackSpec("gaussian_noise", -0.1)
        with pytest.raises(ValueError):
            AttackSpec("contrast", 0.0)
        with pytest.raises(ValueError):
            AttackSpec("scaling", -1.0)

    def test_suite_round_robin(self):
        suite = AttackSuite(specs=(AttackSpec("jpeg", 80),
                                   AttackSpec("contrast", 0.7)))
        assert suite.pick(0).kind == "jpeg"
        assert suite.pick(1).kind == "contrast"
        assert suite.pick(2).kind == "jpeg"
        assert suite.pick(101).kind == "contrast"

    def test_empty_suite_raises(self):
        with pytest.raises(ValueError):
            AttackSuite(specs=())


class TestExactForward:
    def test_identity_attacks_are_bit_exact(self):
        rng = np.random.default_rng(0)
        img = rng.random((32, 32, 3))
        for spec in [AttackSpec("identity"), AttackSpec("contrast", 1.0),
                     AttackSpec("rotation", 0.0)]:
            assert np.array_equal(apply_exact(spec, img), img), spec.kind

    def test_jpeg_qf100_high_fidelity_on_smooth_image(self):
        img = _smooth_image()
        out = apply_exact(AttackSpec("jpeg", 100), img)
        assert psnr(image_from_array(np.clip(out, 0, 1)),
                    image_from_array(img)) >= 40.0

    def test_jpeg_quality_ordering(self):
        rng = np.random.default_rng(1)
        img = np.clip(_smooth_image() + 0.05 * rng.standard_normal((64, 64, 3)),
                      0, 1)
        errs = [np.mean((apply_exact(AttackSpec("jpeg", qf), img) - img) ** 2)
                for qf in (30, 60, 90)]
        assert errs[0] > errs[1] > errs[2]

    def test_quant_tables_scaling(self):
        luma50, chroma50 = quant_tables(50.0)
        assert luma50[0, 0] == 16 and chroma50[0, 0] == 17
        luma100, _ = quant_tables(100.0)
        assert np.all(luma100 == 1)
        luma10, _ = quant_tables(10.0)
        assert np.all(luma10 >= luma50)

    def test_gaussian_noise_statistics(self):
        # the [0, 1] clamp truncates the additive noise, so measure the
        # pre-clamp variance from the attack's own noise stream
        from rfnns.keyed_rand import derive_stream
        noise = derive_stream(11, "attack/gaussian_noise").gaussian(
            128 * 128 * 3) * np.sqrt(0.07)
        assert abs(np.var(noise) - 0.07) / 0.07 < 0.10
        # and check the attack consumes exactly that field
        img = np.full((128, 128, 3), 0.5)
        out = apply_exact(AttackSpec("gaussian_noise", 0.07, noise_seed=11),
                          img)
        expect = np.clip(img + noise.reshape(img.shape), 0.0, 1.0)
        assert np.array_equal(out, expect)

    def test_gaussian_noise_seeded(self):
        img = np.full((16, 16, 3), 0.5)
        a = apply_exact(AttackSpec("gaussian_noise", 0.01, noise_seed=5), img)
        b = apply_exact(AttackSpec("gaussian_noise", 0.01, noise_seed=5), img)
        c = apply_exact(AttackSpec("gaussian_noise", 0.01, noise_seed=6), img)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_contrast_formula(self):
        rng = np.random.default_rng(2)
        img = rng.random((8, 8, 3))
        out = apply_exact(AttackSpec("contrast", 0.7), img)
        ref = np.clip(img + (0.7 - 1.0) * (img - 0.5), 0.0, 1.0)
        assert np.allclose(out, ref, atol=1e-15)

    def test_scaling_preserves_shape_and_smooths(self):
        img = _smooth_image(32)
        out = apply_exact(AttackSpec("scaling", 0.5), img)
        assert out.shape == img.shape
        # a linear ramp survives bilinear down/up almost exactly
        assert np.mean((out - img) ** 2) < 1e-3

    def test_rotation_preserves_shape(self):
        img = _smooth_image(32)
        out = apply_exact(AttackSpec("rotation", 15.0), img)
        assert out.shape == img.shape
        assert np.all(np.isfinite(out))

    def test_blur_preserves_constant(self):
        img = np.full((24, 24, 3), 0.37)
        out = apply_exact(AttackSpec("gaussian_blur", 1.0), img)
        assert np.allclose(out, img, atol=1e-12)

    def test_blur_reduces_variance(self):
        rng = np.random.default_rng(4)
        img = rng.random((32, 32, 3))
        out = apply_exact(AttackSpec("gaussian_blur", 1.0), img)
        assert out.var() < 0.25 * img.var()


class TestSurrogate:
    def test_forward_matches_exact(self):
        rng = np.random.default_rng(5)
        img = rng.random((32, 32, 3))
        for spec in ALL_SPECS:
            exact = apply_exact(spec, img)
            sur, _ = apply_surrogate(spec, img)
            assert np.max(np.abs(exact - sur)) <= 1e-12, spec.kind

    @pytest.mark.parametrize(
        "spec", [s for s in ALL_SPECS if s.kind != "jpeg"],
        ids=lambda s: s.kind)
    def test_backward_matches_finite_differences(self, spec):
        rng = np.random.default_rng(6)
        img = 0.2 + 0.6 * rng.random((16, 16, 3))
        out, back = apply_surrogate(spec, img)
        upstream = rng.standard_normal(out.shape)
        g = back(upstream)
        assert g.shape == img.shape

        eps = 1e-6
        rng2 = np.random.default_rng(7)
        for _ in range(3):
            d = rng2.standard_normal(img.shape)
            op, _ = apply_surrogate(spec, img + eps * d)
            om, _ = apply_surrogate(spec, img - eps * d)
            fd = float(np.sum(upstream * (op - om)) / (2 * eps))
            an = float(np.sum(g * d))
            assert an == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_jpeg_backward_blocks_dead_zone_directions(self):
        # on a constant image every AC coefficient quantizes to zero, so an
        # upstream gradient with zero mean in each 8x8 block excites only
        # dead-zone coefficients and must come back as exactly zero
        rng = np.random.default_rng(6)
        img = np.full((16, 16, 3), 0.7)
        out, back = apply_surrogate(AttackSpec("jpeg", 80), img)
        up = rng.standard_normal(out.shape)
        blocks = up.reshape(2, 8, 2, 8, 3)
        up = (blocks - blocks.mean(axis=(1, 3), keepdims=True)).reshape(up.shape)
        assert np.allclose(back(up), 0.0, atol=1e-12)

    def test_jpeg_backward_passes_surviving_coefficients(self):
        # on the same constant image the luma DC coefficient survives
        # quantization; the backward pass must equal the projection of the
        # upstream gradient onto that coefficient through the color transform
        from rfnns.attacks import _RGB2YCC, _YCC2RGB
        img = np.full((16, 16, 3), 0.7)
        out, back = apply_surrogate(AttackSpec("jpeg", 80), img)
        up = np.tile(np.array([0.3, -0.2, 0.5]), (16, 16, 1))
        g_ycc = up @ _YCC2RGB / 255.0
        g_ycc[:, :, 1:] = 0.0  # chroma DC of a gray image is dead
        expected = g_ycc @ _RGB2YCC * 255.0
        assert np.allclose(back(up), expected, atol=1e-12)

    def test_noise_backward_is_identity(self):
        rng = np.random.default_rng(8)
        img = rng.random((8, 8, 3)) * 0.5 + 0.25
        _, back = apply_surrogate(AttackSpec("gaussian_noise", 0.0001, 1), img)
        up = rng.standard_normal((8, 8, 3))
        assert np.array_equal(back(up), up)
