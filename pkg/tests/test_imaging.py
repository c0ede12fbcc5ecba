"""Resampler, color, metric, and file I/O tests against scalar oracles."""

import math

import numpy as np
import pytest

from mssr.imaging import (
    bicubic_resize,
    crop_border,
    luminance,
    psnr,
    quantize_8bit,
    read_image,
    rgb_to_ycbcr,
    ssim,
    write_image,
    ycbcr_to_rgb,
)
from mssr.tensor_ops import ShapeError

from conftest import synthetic_plane, synthetic_rgb
from oracles import bicubic_reference, psnr_reference, ssim_reference


class TestBicubic:
    @pytest.mark.parametrize("out_h,out_w", [(1, 1), (3, 8), (9, 9), (23, 5), (40, 40)])
    def test_constant_preserved(self, out_h, out_w):
        out = bicubic_resize(np.full((9, 9), 0.37), out_h, out_w)
        assert out.shape == (out_h, out_w)
        assert np.abs(out - 0.37).max() < 1e-9

    def test_same_size_is_identity(self, rng):
        img = rng.uniform(0, 1, (16, 13))
        np.testing.assert_array_equal(bicubic_resize(img, 16, 13), img)

    def test_ramp_x2_matches_reference(self):
        img = np.linspace(0, 1, 64).reshape(8, 8)
        out = bicubic_resize(img, 16, 16)
        ref = bicubic_reference(img, 16, 16)
        assert np.abs(out - ref).max() < 1e-6

    def test_seeded_cases_match_reference(self):
        cases = [(8, 8, 16, 16), (10, 7, 5, 3), (6, 9, 13, 27), (12, 12, 4, 4), (5, 5, 5, 9)]
        for seed, (h, w, oh, ow) in enumerate(cases):
            img = np.random.default_rng(seed).uniform(0, 1, (h, w))
            assert np.abs(bicubic_resize(img, oh, ow) - bicubic_reference(img, oh, ow)).max() < 1e-6

    def test_output_clipped(self, rng):
        # sharp edges overshoot with a cubic kernel; output must stay in [0,1]
        img = np.zeros((10, 10))
        img[5:, :] = 1.0
        out = bicubic_resize(img, 30, 30)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_validation(self, rng):
        with pytest.raises(ValueError):
            bicubic_resize(np.zeros((4, 4)), 0, 4)
        with pytest.raises(ShapeError):
            bicubic_resize(np.zeros((4, 4, 3)), 4, 4)

    def test_smooth_round_trip_beats_noise(self):
        """Downscale/upscale by 2 hurts noise more than smooth content."""
        wins = 0
        for trial in range(20):
            rng = np.random.default_rng(trial)
            smooth = synthetic_plane(rng, 32, 32)
            noise = rng.uniform(0, 1, (32, 32))

            def round_trip(img):
                lr = bicubic_resize(img, 16, 16)
                return psnr(bicubic_resize(lr, 32, 32), img)

            if round_trip(smooth) > round_trip(noise):
                wins += 1
        assert wins >= 19


class TestYcbcr:
    def test_white(self):
        y, cb, cr = rgb_to_ycbcr(np.ones((2, 2, 3)))
        assert y[0, 0] == pytest.approx(235 / 255, abs=1e-12)

    def test_black(self):
        y, cb, cr = rgb_to_ycbcr(np.zeros((2, 2, 3)))
        assert y[0, 0] == pytest.approx(16 / 255, abs=1e-12)
        assert cb[0, 0] == pytest.approx(128 / 255, abs=1e-12)
        assert cr[0, 0] == pytest.approx(128 / 255, abs=1e-12)

    def test_round_trip(self, rng):
        rgb = rng.uniform(0, 1, (9, 7, 3))
        back = ycbcr_to_rgb(*rgb_to_ycbcr(rgb))
        assert np.abs(back - rgb).max() < 1e-6

    def test_luminance_of_gray_passthrough(self, rng):
        plane = rng.uniform(0, 1, (5, 5))
        np.testing.assert_array_equal(luminance(plane), plane)

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            rgb_to_ycbcr(np.zeros((4, 4)))


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        a = rng.uniform(0, 1, (10, 10))
        assert psnr(a, a) == math.inf

    def test_constant_offset_analytic(self):
        a = np.full((10, 10), 100 / 255)
        b = np.full((10, 10), 105 / 255)
        assert psnr(a, b) == pytest.approx(20 * math.log10(255 / 5), abs=1e-12)

    def test_symmetric(self, rng):
        a, b = rng.uniform(0, 1, (8, 8)), rng.uniform(0, 1, (8, 8))
        assert psnr(a, b) == psnr(b, a)

    def test_seeded_cases_match_reference(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            a, b = rng.uniform(0, 1, (12, 9)), rng.uniform(0, 1, (12, 9))
            assert abs(psnr(a, b) - psnr_reference(a, b)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_quantization_rounds_half_away_from_zero(self):
        assert quantize_8bit(np.array([[0.5 / 255]]))[0, 0] == 1.0
        assert quantize_8bit(np.array([[254.5 / 255]]))[0, 0] == 255.0


class TestSsim:
    def test_self_is_exactly_one(self, rng):
        a = rng.uniform(0, 1, (20, 20))
        assert ssim(a, a) == 1.0

    def test_symmetric(self, rng):
        a, b = rng.uniform(0, 1, (16, 16)), rng.uniform(0, 1, (16, 16))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-9

    def test_inverted_binary_structure(self, rng):
        binary = (rng.uniform(0, 1, (24, 24)) > 0.5).astype(float)
        assert ssim(binary, 1 - binary) < 0.1

    def test_seeded_cases_match_reference(self):
        for seed in range(3):
            rng = np.random.default_rng(seed)
            a = synthetic_plane(rng, 16, 14)
            b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
            assert abs(ssim(a, b) - ssim_reference(a, b)) < 1e-6

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="11"):
            ssim(np.zeros((10, 12)), np.zeros((10, 12)))

    def test_bounded_above_by_one(self, rng):
        a, b = rng.uniform(0, 1, (16, 16)), rng.uniform(0, 1, (16, 16))
        assert ssim(a, b) <= 1.0


class TestCropBorder:
    def test_zero_is_identity(self, rng):
        img = rng.uniform(0, 1, (6, 7))
        np.testing.assert_array_equal(crop_border(img, 0), img)

    def test_interior_preserved(self):
        img = np.arange(100, dtype=float).reshape(10, 10) / 100
        out = crop_border(img, 2)
        assert out.shape == (6, 6)
        np.testing.assert_array_equal(out, img[2:8, 2:8])

    def test_over_crop_rejected(self):
        with pytest.raises(ValueError):
            crop_border(np.zeros((10, 10)), 5)


class TestFileIO:
    def test_png_gray_round_trip(self, tmp_path, rng):
        img = rng.uniform(0, 1, (9, 12))
        path = tmp_path / "gray.png"
        write_image(path, img)
        back = read_image(path)
        np.testing.assert_array_equal(quantize_8bit(back), quantize_8bit(img))
        assert back.ndim == 2

    def test_png_rgb_round_trip(self, tmp_path, rng):
        img = synthetic_rgb(rng, 8, 10)
        path = tmp_path / "color.png"
        write_image(path, img)
        back = read_image(path)
        assert back.shape == (8, 10, 3)
        np.testing.assert_array_equal(quantize_8bit(back), quantize_8bit(img))

    @pytest.mark.parametrize("ascii_format", [False, True])
    def test_pgm_round_trip(self, tmp_path, rng, ascii_format):
        img = rng.uniform(0, 1, (7, 5))
        path = tmp_path / "plane.pgm"
        write_image(path, img, ascii_format=ascii_format)
        np.testing.assert_array_equal(quantize_8bit(read_image(path)), quantize_8bit(img))

    @pytest.mark.parametrize("ascii_format", [False, True])
    def test_ppm_round_trip(self, tmp_path, rng, ascii_format):
        img = synthetic_rgb(rng, 6, 4)
        path = tmp_path / "color.ppm"
        write_image(path, img, ascii_format=ascii_format)
        np.testing.assert_array_equal(quantize_8bit(read_image(path)), quantize_8bit(img))

    def test_pnm_comment_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_text("P2\n# a comment\n2 2\n255\n0 128\n# mid comment\n255 64\n")
        img = read_image(path)
        np.testing.assert_allclose(img * 255, [[0, 128], [255, 64]])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P9\n2 2\n255\n....")
        with pytest.raises(ValueError, match="magic"):
            read_image(path)
