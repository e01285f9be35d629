"""
Image quality metrics: PSNR and SSIM with optional evaluation masks
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import signal

from models.errors import EmptySelectionError, ShapeMismatchError, WindowTooLargeError

PSNR_SENTINEL = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@lru_cache(maxsize=4)
def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=-1) if img.ndim == 3 else img


@dataclass
class SsimTerms:
    """Local statistics over every full window, shapes (H-10, W-10)"""
    value: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray


def ssim_terms(x: np.ndarray, y: np.ndarray) -> SsimTerms:
    """Local SSIM map of two grayscale images ('valid' window placement)"""
    win = gaussian_window()

    def conv(img):
        return signal.convolve2d(img, win, mode="valid")

    mx, my = conv(x), conv(y)
    vx = conv(x * x) - mx * mx
    vy = conv(y * y) - my * my
    cxy = conv(x * y) - mx * my
    a1 = 2.0 * mx * my + SSIM_C1
    a2 = 2.0 * cxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = vx + vy + SSIM_C2
    return SsimTerms(value=a1 * a2 / (b1 * b2), mx=mx, my=my, a1=a1, a2=a2, b1=b1, b2=b2)


def ssim_backward(terms: SsimTerms, x: np.ndarray, y: np.ndarray, grad_map: np.ndarray) -> np.ndarray:
    """d(sum grad_map * ssim_map)/dx for grayscale x, y held fixed"""
    win = gaussian_window()
    s = terms.value
    den = terms.b1 * terms.b2
    g_mx = grad_map * (2.0 * terms.my * (terms.a2 - terms.a1) - s * 2.0 * terms.mx * (terms.b2 - terms.b1)) / den
    g_exy = grad_map * 2.0 * terms.a1 / den
    g_exx = grad_map * (-s * terms.b1) / den

    def adj(g):
        return signal.convolve2d(g, win, mode="full")

    return adj(g_mx) + 2.0 * x * adj(g_exx) + y * adj(g_exy)


def window_centers(mask: np.ndarray) -> np.ndarray:
    """Crop a full-size (H,W) mask to the window-center grid of ssim_terms"""
    r = SSIM_WINDOW // 2
    return mask[r:mask.shape[0] - r, r:mask.shape[1] - r]


def _check(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """10 log10(1/MSE) over selected pixels; identical images report 99.0"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check(a, b)
    sel = np.ones(a.shape[:2], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not sel.any():
        raise EmptySelectionError("PSNR mask selects no pixels")
    mse = float(np.mean((a[sel] - b[sel]) ** 2))
    if mse <= 0.0:
        return PSNR_SENTINEL
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_SENTINEL))


def ssim(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Mean local SSIM over selected window centers, grayscale = mean of RGB"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise WindowTooLargeError(f"image {a.shape[:2]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    terms = ssim_terms(grayscale(a), grayscale(b))
    if mask is None:
        return float(terms.value.mean())
    sel = window_centers(np.asarray(mask, dtype=bool))
    if not sel.any():
        raise EmptySelectionError("SSIM mask selects no window centers")
    return float(terms.value[sel].mean())
