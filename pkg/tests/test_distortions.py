"""Distortion channel suite."""

import numpy as np
import pytest

from inversemark.core import ImageTensor
from inversemark.distortions import (apply_distortion, brightness, gaussian_blur,
                                     gaussian_noise, jpeg, random_crop, rotate)
from inversemark.errors import InvalidArgumentError
from inversemark.jpegcodec import (CHROMA_TABLE, LUMA_TABLE, quality_scaled_table,
                                   quantize_block)

from oracles import reference_quality_table, reference_quantized_block


def random_image(seed, side=64):
    return ImageTensor(np.random.default_rng(seed).random((3, side, side)))


class TestJpeg:
    def test_quality_100_nearly_lossless_on_constant(self):
        img = ImageTensor(np.full((3, 32, 32), 0.42))
        out = jpeg(img, quality=100)
        assert np.max(np.abs(out.data - img.data)) <= 2 / 255

    def test_quality_50_is_lossy_but_finite(self):
        img = random_image(0)
        out = jpeg(img, quality=50)
        mse = np.mean((out.data - img.data) ** 2)
        assert mse > 0
        assert np.isfinite(out.data).all()

    def test_quantized_block_matches_reference_codec(self):
        rng = np.random.default_rng(1)
        block = np.round(rng.random((8, 8)) * 255)
        for base in (LUMA_TABLE, CHROMA_TABLE):
            table = quality_scaled_table(base, 50)
            assert np.array_equal(quantize_block(block, table),
                                  reference_quantized_block(block, table))

    def test_quality_tables_match_ijg_curve(self):
        for q in (1, 10, 50, 75, 90, 100):
            assert np.array_equal(quality_scaled_table(LUMA_TABLE, q),
                                  reference_quality_table(LUMA_TABLE, q))

    def test_quality_range_enforced(self):
        with pytest.raises(InvalidArgumentError):
            jpeg(random_image(2), quality=0)

    def test_shape_and_range_preserved(self):
        img = random_image(3)
        out = jpeg(img, quality=30)
        assert out.shape == img.shape
        assert out.data.min() >= 0 and out.data.max() <= 1


class TestRandomCrop:
    def test_ratio_one_is_identity(self):
        img = random_image(4)
        assert random_crop(img, 1.0, seed=9) is img

    def test_kept_window_arithmetic(self):
        img = ImageTensor(np.full((3, 512, 512), 0.5))
        out = random_crop(img, 0.8, seed=5)
        nonzero = int((out.data > 0).sum())
        assert nonzero == 409 * 409 * 3

    def test_window_stays_in_place(self):
        img = random_image(6, side=32)
        out = random_crop(img, 0.5, seed=7)
        kept = out.data != 0
        assert np.array_equal(out.data[kept], img.data[kept])

    def test_deterministic_under_seed(self):
        img = random_image(8)
        a = random_crop(img, 0.8, seed=11)
        b = random_crop(img, 0.8, seed=11)
        assert np.array_equal(a.data, b.data)

    def test_ratio_validation(self):
        with pytest.raises(InvalidArgumentError):
            random_crop(random_image(9), 0.0, seed=0)


class TestGaussianBlur:
    def test_constant_image_unchanged(self):
        img = ImageTensor(np.full((3, 32, 32), 0.3))
        out = gaussian_blur(img, radius=2)
        assert np.max(np.abs(out.data - 0.3)) <= 1e-12

    def test_impulse_response_matches_kernel_oracle(self):
        side = 65
        arr = np.zeros((3, side, side))
        arr[:, side // 2, side // 2] = 1.0
        out = gaussian_blur(ImageTensor(arr), radius=2)
        sigma = 2.0
        half = int(3.0 * sigma + 0.5)
        x = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-x ** 2 / (2 * sigma ** 2))
        g /= g.sum()
        kernel = np.outer(g, g)
        window = out.data[0, side // 2 - half:side // 2 + half + 1,
                          side // 2 - half:side // 2 + half + 1]
        assert np.max(np.abs(window - kernel)) <= 1e-12

    def test_interior_mass_preserved(self):
        arr = np.zeros((3, 64, 64))
        arr[:, 24:40, 24:40] = 0.8  # support well inside the borders
        img = ImageTensor(arr)
        out = gaussian_blur(img, radius=2)
        assert abs(out.data.mean() - img.data.mean()) <= 1e-6


class TestGaussianNoise:
    def test_zero_std_is_identity(self):
        img = random_image(10)
        assert gaussian_noise(img, 0.0, seed=1) is img

    def test_sample_std_concentrates(self):
        img = ImageTensor(np.full((3, 640, 640), 0.5))
        out = gaussian_noise(img, 0.05, seed=12)
        measured = np.std(out.data - img.data)
        assert 0.048 <= measured <= 0.052

    def test_deterministic_under_seed(self):
        img = random_image(13)
        a = gaussian_noise(img, 0.05, seed=2)
        b = gaussian_noise(img, 0.05, seed=2)
        assert np.array_equal(a.data, b.data)


class TestBrightness:
    def test_factor_one_identity(self):
        img = random_image(14)
        assert np.array_equal(brightness(img, 1.0).data, img.data)

    def test_clamping_cases(self):
        img = ImageTensor(np.stack([np.full((16, 16), 0.6), np.full((16, 16), 0.3),
                                    np.full((16, 16), 0.1)]))
        out = brightness(img, 2.0)
        assert np.allclose(out.data[0], 1.0)
        assert np.allclose(out.data[1], 0.6)
        assert np.allclose(out.data[2], 0.2)


class TestRotate:
    def test_full_turn_identity(self):
        img = random_image(15)
        assert np.array_equal(rotate(img, 360).data, img.data)

    def test_quarter_turn_has_order_four(self):
        img = random_image(16)
        out = img
        for _ in range(4):
            out = rotate(out, 90)
        assert np.array_equal(out.data, img.data)

    def test_quarter_turn_inverse(self):
        img = random_image(17)
        assert np.array_equal(rotate(rotate(img, 90), -90).data, img.data)

    def test_arbitrary_angle_same_canvas(self):
        img = random_image(18)
        out = rotate(img, 17.5)
        assert out.shape == img.shape
        assert out.data.min() >= 0 and out.data.max() <= 1


def test_registry_defaults_mirror_benchmark_config():
    img = random_image(19)
    for name in ("jpeg", "crop", "blur", "noise", "brightness", "rotate"):
        out = apply_distortion(name, img, seed=3)
        assert out.shape == img.shape
        assert out.data.min() >= 0 and out.data.max() <= 1
    with pytest.raises(InvalidArgumentError):
        apply_distortion("sharpen", img)
