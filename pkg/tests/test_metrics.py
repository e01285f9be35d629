import numpy as np
import pytest

from models.errors import EmptySelectionError, ShapeMismatchError, WindowTooLargeError
from services.metrics import SSIM_C1, psnr, ssim


def test_psnr_of_identical_images(rng):
    img = rng.random((8, 8, 3))
    assert psnr(img, img) == 99.0


def test_psnr_of_uniform_error():
    assert psnr(np.full((8, 8, 3), 0.5), np.full((8, 8, 3), 0.4)) == pytest.approx(20.0)


def test_psnr_respects_mask():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    b[0, 0] = 1.0
    mask = np.ones((4, 4), dtype=bool)
    mask[0, 0] = False
    assert psnr(a, b, mask) == 99.0
    with pytest.raises(EmptySelectionError):
        psnr(a, b, np.zeros((4, 4), dtype=bool))


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros((4, 4)), np.zeros((4, 4, 3)))


def test_ssim_of_identical_images(rng):
    img = rng.random((20, 24, 3))
    assert ssim(img, img) == pytest.approx(1.0)


def test_ssim_of_constant_images():
    mu_a, mu_b = 0.4, 0.5
    expected = (2 * mu_a * mu_b + SSIM_C1) / (mu_a ** 2 + mu_b ** 2 + SSIM_C1)
    assert ssim(np.full((16, 16), mu_a), np.full((16, 16), mu_b)) == pytest.approx(expected)


def test_ssim_drops_with_noise(rng):
    img = rng.random((32, 32))
    noisy = np.clip(img + rng.normal(0.0, 0.2, img.shape), 0.0, 1.0)
    assert ssim(img, noisy) < 0.9


def test_ssim_needs_a_full_window():
    with pytest.raises(WindowTooLargeError):
        ssim(np.zeros((10, 30)), np.zeros((10, 30)))


def test_ssim_mask_without_window_centers():
    mask = np.zeros((16, 16), dtype=bool)
    mask[0, 0] = True
    with pytest.raises(EmptySelectionError):
        ssim(np.zeros((16, 16)), np.zeros((16, 16)), mask)
