"""
Refinement losses

Each loss returns its value, or (value, gradient) with return_grad=True where
the gradient is taken w.r.t. the first (rendered) argument. Masks named
`mask` exclude pixels; inpainting masks `inpaint` select them.
"""
from typing import Dict, Optional, Tuple

import numpy as np

from config import Config
from models.errors import EmptySelectionError, ShapeMismatchError
from models.scene import Camera
from utils.kernels import distortion_rows

from .metrics import SSIM_WINDOW, grayscale, ssim_backward, ssim_terms, window_centers
from .rasterizer import DepthSamples

L1_WEIGHT = 0.8
SSIM_WEIGHT = 0.2
BCE_EPS = 1e-6
MATERIAL_MAPS = ("diffuse", "fresnel", "roughness", "normal")


def _same(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")


def _channels(x: np.ndarray) -> int:
    return x.shape[2] if x.ndim == 3 else 1


def _expand(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    return m[..., None] if x.ndim == 3 else m


def _result(value: float, grad, return_grad: bool):
    return (float(value), grad) if return_grad else float(value)


def loss_l1(x, y, mask: Optional[np.ndarray] = None, return_grad: bool = False):
    """Mean |x - y| over pixels not in mask and all channels"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _same(x, y)
    keep = np.ones(x.shape[:2], dtype=bool) if mask is None else ~np.asarray(mask, dtype=bool)
    count = int(keep.sum()) * _channels(x)
    if count == 0:
        raise EmptySelectionError("no unmasked pixels")
    diff = np.where(_expand(keep, x), x - y, 0.0)
    grad = np.sign(diff) / count if return_grad else None
    return _result(np.abs(diff).sum() / count, grad, return_grad)


def loss_color(img, img_gt, mask: Optional[np.ndarray] = None, return_grad: bool = False):
    """
    0.8 L1 + 0.2 (1 - SSIM) over unmasked pixels

    The SSIM term averages local SSIM of the grayscale images over unmasked
    window centers and is zero when no full window has an unmasked center.
    """
    img = np.asarray(img, dtype=np.float64)
    img_gt = np.asarray(img_gt, dtype=np.float64)
    l1 = loss_l1(img, img_gt, mask, return_grad)
    value, grad = (l1 if return_grad else (l1, None))
    value *= L1_WEIGHT
    if return_grad:
        grad = grad * L1_WEIGHT

    height, width = img.shape[:2]
    if height >= SSIM_WINDOW and width >= SSIM_WINDOW:
        keep = np.ones((height, width), dtype=bool) if mask is None else ~np.asarray(mask, dtype=bool)
        centers = window_centers(keep)
        count = int(centers.sum())
        if count:
            x, y = grayscale(img), grayscale(img_gt)
            terms = ssim_terms(x, y)
            value += SSIM_WEIGHT * (1.0 - terms.value[centers].sum() / count)
            if return_grad:
                g_map = np.where(centers, -SSIM_WEIGHT / count, 0.0)
                g_gray = ssim_backward(terms, x, y, g_map)
                grad = grad + (g_gray[..., None] / img.shape[2] if img.ndim == 3 else g_gray)
    return _result(value, grad, return_grad)


def loss_material(rendered: Dict[str, np.ndarray], inpainted: Dict[str, np.ndarray],
                  region_hat: np.ndarray, inpaint: np.ndarray, return_grad: bool = False):
    """Sum over diffuse, fresnel, roughness and normal of mean |X - X^| (1 - M^) over the inpainting mask"""
    sel = np.asarray(inpaint, dtype=bool)
    gate = np.where(sel, 1.0 - np.asarray(region_hat, dtype=np.float64), 0.0)
    pixels = int(sel.sum())
    value = 0.0
    grads: Dict[str, np.ndarray] = {}
    for name in MATERIAL_MAPS:
        if name not in rendered or name not in inpainted:
            continue
        x = np.asarray(rendered[name], dtype=np.float64)
        y = np.asarray(inpainted[name], dtype=np.float64)
        _same(x, y)
        if pixels == 0:
            grads[name] = np.zeros_like(x)
            continue
        count = pixels * _channels(x)
        diff = x - y
        g = _expand(gate, x)
        value += float(np.sum(np.abs(diff) * g)) / count
        if return_grad:
            grads[name] = np.sign(diff) * g / count
    return _result(value, grads, return_grad)


def loss_appearance(img, img_hat, region_hat: np.ndarray, inpaint: np.ndarray, return_grad: bool = False):
    """Mean |I - I^| M^ over the inpainting mask; masked L1 in place of a perceptual metric"""
    x = np.asarray(img, dtype=np.float64)
    y = np.asarray(img_hat, dtype=np.float64)
    _same(x, y)
    sel = np.asarray(inpaint, dtype=bool)
    pixels = int(sel.sum())
    if pixels == 0:
        return _result(0.0, np.zeros_like(x), return_grad)
    count = pixels * _channels(x)
    g = _expand(np.where(sel, np.asarray(region_hat, dtype=np.float64), 0.0), x)
    diff = x - y
    grad = np.sign(diff) * g / count if return_grad else None
    return _result(np.sum(np.abs(diff) * g) / count, grad, return_grad)


def forward_differences(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y, zero in the last column/row"""
    dx = np.zeros_like(x)
    dy = np.zeros_like(x)
    dx[:, :-1] = x[:, 1:] - x[:, :-1]
    dy[:-1] = x[1:] - x[:-1]
    return dx, dy


def _gradient_norm(x: np.ndarray):
    dx, dy = forward_differences(x)
    if x.ndim == 2:
        dx, dy = dx[..., None], dy[..., None]
    return np.sqrt(np.sum(dx * dx + dy * dy, axis=-1)), dx, dy


def loss_smooth(maps: Dict[str, np.ndarray], img_gt: np.ndarray, weight: np.ndarray,
                return_grad: bool = False):
    """Sum over maps of mean(weight |grad X| exp(-|grad I_gt|)), edge-aware smoothness"""
    img_gt = np.asarray(img_gt, dtype=np.float64)
    edge, _, _ = _gradient_norm(img_gt)
    w = np.asarray(weight, dtype=np.float64) * np.exp(-edge)
    pixels = w.size
    value = 0.0
    grads: Dict[str, np.ndarray] = {}
    for name, x in maps.items():
        x = np.asarray(x, dtype=np.float64)
        if x.shape[:2] != w.shape:
            raise ShapeMismatchError(f"{name} map {x.shape[:2]} does not match {w.shape}")
        norm, dx, dy = _gradient_norm(x)
        value += float(np.sum(w * norm)) / pixels
        if return_grad:
            safe = np.where(norm > 1e-12, norm, 1.0)
            coef = np.where(norm > 1e-12, w / safe / pixels, 0.0)[..., None]
            gx = coef * dx
            gy = coef * dy
            g = np.zeros(dx.shape)
            # d/dx of x[:,j+1]-x[:,j]
            g[:, 1:] += gx[:, :-1]
            g[:, :-1] -= gx[:, :-1]
            g[1:] += gy[:-1]
            g[:-1] -= gy[:-1]
            grads[name] = g if x.ndim == 3 else g[..., 0]
    return _result(value, grads, return_grad)


def loss_label_bce(omega, omega_gt, mask: Optional[np.ndarray] = None, return_grad: bool = False):
    """Mean binary cross-entropy over unmasked pixels, predictions clamped to [eps, 1-eps]"""
    x = np.asarray(omega, dtype=np.float64)
    y = np.asarray(omega_gt, dtype=np.float64)
    _same(x, y)
    keep = np.ones(x.shape, dtype=bool) if mask is None else ~np.asarray(mask, dtype=bool)
    count = int(keep.sum())
    if count == 0:
        return _result(0.0, np.zeros_like(x), return_grad)
    p = np.clip(x, BCE_EPS, 1.0 - BCE_EPS)
    bce = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    value = float(np.sum(np.where(keep, bce, 0.0))) / count
    grad = None
    if return_grad:
        inside = keep & (x > BCE_EPS) & (x < 1.0 - BCE_EPS)
        grad = np.where(inside, (p - y) / (p * (1.0 - p)), 0.0) / count
    return _result(value, grad, return_grad)


def depth_normals(depth: np.ndarray, cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """Normals from central differences of unprojected depth, oriented toward the camera"""
    height, width = depth.shape
    vv, uu = np.mgrid[0:height, 0:width].astype(np.float64)
    pts = cam.unproject(uu, vv, depth)
    nd = np.zeros((height, width, 3))
    ok = np.zeros((height, width), dtype=bool)
    if height < 3 or width < 3:
        return nd, ok
    tx = pts[1:-1, 2:] - pts[1:-1, :-2]
    ty = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n = np.cross(tx, ty)
    length = np.linalg.norm(n, axis=-1)
    good = length > 1e-12
    n = np.where(good[..., None], n / np.where(good, length, 1.0)[..., None], 0.0)
    view = cam.pixel_directions()[1:-1, 1:-1]
    flip = np.sum(n * view, axis=-1) > 0.0
    n[flip] *= -1.0
    nd[1:-1, 1:-1] = n
    ok[1:-1, 1:-1] = good
    return nd, ok


def loss_depth_normal(normal, depth, cam: Camera, alpha: Optional[np.ndarray] = None,
                      a_min: float = Config.MASK_ALPHA_MIN, mask: Optional[np.ndarray] = None,
                      return_grad: bool = False):
    """Mean (1 - N . N_d) over interior pixels whose 3x3 neighbourhood has alpha >= a_min"""
    normal = np.asarray(normal, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    nd, valid = depth_normals(depth, cam)
    if alpha is not None:
        filled = np.asarray(alpha) >= a_min
        cross = filled.copy()
        cross[1:-1, 1:-1] &= filled[1:-1, 2:] & filled[1:-1, :-2] & filled[2:, 1:-1] & filled[:-2, 1:-1]
        valid &= cross
    if mask is not None:
        valid &= ~np.asarray(mask, dtype=bool)
    count = int(valid.sum())
    if count == 0:
        return _result(0.0, np.zeros_like(normal), return_grad)
    value = float(np.sum(np.where(valid, 1.0 - np.sum(normal * nd, axis=-1), 0.0))) / count
    grad = np.where(valid[..., None], -nd / count, 0.0) if return_grad else None
    return _result(value, grad, return_grad)


def loss_depth_distortion(samples: DepthSamples) -> float:
    """Mean over pixels of sum_{i,j} w_i w_j |d_i - d_j| with NDC depths"""
    rows = samples.indptr.shape[0] - 1
    if rows == 0:
        return 0.0
    per_pixel = distortion_rows(np.ascontiguousarray(samples.indptr, dtype=np.int64),
                                np.ascontiguousarray(samples.weight, dtype=np.float64),
                                np.ascontiguousarray(samples.ndc, dtype=np.float64))
    return float(per_pixel.mean())


def loss_normal(normal, normal_gt, glossy, mask: Optional[np.ndarray] = None, return_grad: bool = False):
    """Mean |glossy (N - N_gt)| over pixels and channels"""
    x = np.asarray(normal, dtype=np.float64)
    y = np.asarray(normal_gt, dtype=np.float64)
    _same(x, y)
    g = np.asarray(glossy, dtype=np.float64)
    if mask is not None:
        g = np.where(np.asarray(mask, dtype=bool), 0.0, g)
    count = x.size
    diff = g[..., None] * (x - y)
    grad = np.sign(diff) * g[..., None] / count if return_grad else None
    return _result(np.abs(diff).sum() / count, grad, return_grad)


def loss_region(region, glossy_gt, mask: Optional[np.ndarray] = None, return_grad: bool = False):
    """Mean of M over ground-truth glossy pixels, pushing glossy surfaces toward M = 0"""
    m = np.asarray(region, dtype=np.float64)
    g = np.asarray(glossy_gt, dtype=np.float64)
    _same(m, g)
    if mask is not None:
        g = np.where(np.asarray(mask, dtype=bool), 0.0, g)
    grad = g / m.size if return_grad else None
    return _result(np.sum(m * g) / m.size, grad, return_grad)
