"""
Screen-space glossy filter: mip pyramid over specular buffers sampled at a
roughness-dependent level, plus the roughness-translation step
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from models.buffers import ScreenPyramid, SpecularBuffers
from models.errors import ShapeMismatchError
from models.network import ConvNetSpec
from models.schemas import FilterOpts
from storage.network_store import load_network
from utils.logger import setup_logger

logger = setup_logger("ssfilter")

BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


# ---------------------------------------------------------------- pyramid operators

def blur_matrix(n: int) -> np.ndarray:
    """5-tap binomial blur along one axis with clamp-to-edge"""
    mat = np.zeros((n, n))
    for i in range(n):
        for k, w in zip(range(-2, 3), BINOMIAL):
            mat[i, min(max(i + k, 0), n - 1)] += w
    return mat


def reduce_matrix(n: int) -> np.ndarray:
    """Blur then keep even samples: (ceil(n/2), n)"""
    return blur_matrix(n)[::2]


def upsample_matrix(n_full: int, n_level: int, scale: int) -> np.ndarray:
    """Bilinear lookup of level coordinates x/scale for every full-resolution x"""
    mat = np.zeros((n_full, n_level))
    for x in range(n_full):
        c = min(max(x / scale, 0.0), n_level - 1)
        x0 = int(np.floor(c))
        x1 = min(x0 + 1, n_level - 1)
        frac = c - x0
        mat[x, x0] += 1.0 - frac
        mat[x, x1] += frac
    return mat


@lru_cache(maxsize=32)
def pyramid_operator(height: int, width: int, levels: int) -> "PyramidOperator":
    return PyramidOperator(height, width, levels)


class PyramidOperator:
    """Separable linear maps for building, sampling and back-propagating a screen pyramid"""

    def __init__(self, height: int, width: int, levels: int):
        self.height = height
        self.width = width
        self.levels = levels
        self.sizes: List[Tuple[int, int]] = [(height, width)]
        self.reduce: List[Tuple[np.ndarray, np.ndarray]] = []
        for _ in range(1, levels):
            h, w = self.sizes[-1]
            self.reduce.append((reduce_matrix(h), reduce_matrix(w)))
            self.sizes.append(((h + 1) // 2, (w + 1) // 2))
        self.upsample = [
            (upsample_matrix(height, h, 2 ** p), upsample_matrix(width, w, 2 ** p))
            for p, (h, w) in enumerate(self.sizes)
        ]

    def build(self, img: np.ndarray) -> ScreenPyramid:
        level = np.asarray(img, dtype=np.float64)
        flat = level.ndim == 2
        if flat:
            level = level[..., None]
        out = [level]
        for rh, rw in self.reduce:
            out.append(np.einsum("ij,jkc,lk->ilc", rh, out[-1], rw))
        return ScreenPyramid(levels=[lv[..., 0] for lv in out] if flat else out)

    def expand(self, pyr: ScreenPyramid) -> List[np.ndarray]:
        """Every level resampled at full-resolution pixel positions"""
        out = []
        for (uh, uw), level in zip(self.upsample, pyr.levels):
            lv = level[..., None] if level.ndim == 2 else level
            res = np.einsum("ij,jkc,lk->ilc", uh, lv, uw)
            out.append(res[..., 0] if level.ndim == 2 else res)
        return out

    def adjoint(self, grads: List[np.ndarray]) -> np.ndarray:
        """Transpose of expand(build(img)): per-level full-res gradients back to level 0"""
        flat = grads[0].ndim == 2
        acc = None
        for p in range(self.levels - 1, -1, -1):
            uh, uw = self.upsample[p]
            g = grads[p][..., None] if flat else grads[p]
            g_level = np.einsum("ij,ikc,kl->jlc", uh, g, uw)
            acc = g_level if acc is None else acc + g_level
            if p > 0:
                rh, rw = self.reduce[p - 1]
                acc = np.einsum("ij,ikc,kl->jlc", rh, acc, rw)
        return acc[..., 0] if flat else acc


def build_pyramid(img: np.ndarray, levels: int = 5) -> ScreenPyramid:
    img = np.asarray(img, dtype=np.float64)
    if not np.isfinite(img).all():
        raise ValueError("pyramid input must be finite")
    return pyramid_operator(img.shape[0], img.shape[1], levels).build(img)


def pyramid_level_weights(rs: np.ndarray, levels: int):
    """Lower level, upper level and blend fraction for level = R_s (P-1)"""
    top = levels - 1
    lvl = np.clip(np.asarray(rs, dtype=np.float64), 0.0, 1.0) * top
    lo = np.minimum(np.floor(lvl).astype(np.int64), max(top - 1, 0))
    hi = np.minimum(lo + 1, top)
    frac = np.where(hi > lo, lvl - lo, 0.0)
    return lo, hi, frac


def _bilinear(img: np.ndarray, x: float, y: float):
    h, w = img.shape[:2]
    x = min(max(x, 0.0), w - 1)
    y = min(max(y, 0.0), h - 1)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def sample_filtered(pyr: ScreenPyramid, px, rs: float):
    """Sample at pixel (x, y) between the two pyramid levels bracketing R_s (P-1)"""
    x, y = float(px[0]), float(px[1])
    lo, hi, frac = pyramid_level_weights(rs, pyr.depth)
    lo, hi, frac = int(lo), int(hi), float(frac)
    a = _bilinear(pyr.levels[lo], x / 2 ** lo, y / 2 ** lo)
    if frac == 0.0:
        return a
    b = _bilinear(pyr.levels[hi], x / 2 ** hi, y / 2 ** hi)
    return (1.0 - frac) * a + frac * b


@dataclass
class FilteredImage:
    value: np.ndarray
    slope: np.ndarray          # d(value)/d(R_s)
    coefficients: List[np.ndarray] = field(default_factory=list)  # per-level blend weights (H,W)


def filter_image(img: np.ndarray, rs: np.ndarray, levels: int) -> FilteredImage:
    """Roughness-guided filtering of a whole image"""
    img = np.asarray(img, dtype=np.float64)
    op = pyramid_operator(img.shape[0], img.shape[1], levels)
    samples = op.expand(op.build(img))
    lo, hi, frac = pyramid_level_weights(rs, levels)
    coefs = []
    value = np.zeros_like(img)
    slope = np.zeros_like(img)
    for p in range(levels):
        c = np.where(lo == p, 1.0 - frac, 0.0) + np.where((hi == p) & (hi != lo), frac, 0.0)
        coefs.append(c)
        s = np.where((hi == p) & (hi != lo), 1.0, 0.0) - np.where((lo == p) & (hi != lo), 1.0, 0.0)
        cc = c[..., None] if img.ndim == 3 else c
        ss = s[..., None] if img.ndim == 3 else s
        value += cc * samples[p]
        slope += ss * samples[p] * (levels - 1)
    return FilteredImage(value=value, slope=slope, coefficients=coefs)


def filter_image_backward(filtered: FilteredImage, grad: np.ndarray) -> np.ndarray:
    """d(loss)/d(img) given d(loss)/d(filtered value), R_s held fixed"""
    levels = len(filtered.coefficients)
    op = pyramid_operator(grad.shape[0], grad.shape[1], levels)
    per_level = []
    for c in filtered.coefficients:
        per_level.append(grad * (c[..., None] if grad.ndim == 3 else c))
    return op.adjoint(per_level)


# ---------------------------------------------------------------- roughness translation

class ConvNet:
    """Inference and input gradient of the 8-layer translation network"""

    def __init__(self, spec: ConvNetSpec):
        self.spec = spec

    @staticmethod
    def _im2col(x: np.ndarray, k: int) -> np.ndarray:
        pad = k // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))       # (cin, H, W, k, k)
        cin, h, w = x.shape
        return win.transpose(0, 3, 4, 1, 2).reshape(cin * k * k, h * w)

    @staticmethod
    def _col2im(cols: np.ndarray, cin: int, h: int, w: int, k: int) -> np.ndarray:
        pad = k // 2
        cols = cols.reshape(cin, k, k, h, w)
        out = np.zeros((cin, h + 2 * pad, w + 2 * pad))
        for dy in range(k):
            for dx in range(k):
                out[:, dy:dy + h, dx:dx + w] += cols[:, dy, dx]
        return out[:, pad:pad + h, pad:pad + w]

    def forward(self, x: np.ndarray):
        """x (2,H,W) -> output (H,W) and activations for backward"""
        _, h, w = x.shape
        acts = []
        cur = x
        for layer in self.spec.layers:
            k = layer.kernel
            cols = self._im2col(cur, k)
            pre = layer.weight.reshape(layer.weight.shape[0], -1) @ cols + layer.bias[:, None]
            out = np.maximum(pre, 0.0) if layer.relu else pre
            acts.append((cur.shape[0], cols, pre))
            cur = out.reshape(-1, h, w)
        return cur[0], acts

    def backward(self, acts, grad_out: np.ndarray) -> np.ndarray:
        h, w = grad_out.shape
        g = grad_out.reshape(1, h * w)
        for layer, (cin, _, pre) in zip(reversed(self.spec.layers), reversed(acts)):
            if layer.relu:
                g = g * (pre > 0.0)
            g_cols = layer.weight.reshape(layer.weight.shape[0], -1).T @ g
            g = self._col2im(g_cols, cin, h, w, layer.kernel).reshape(cin, h * w)
        return g.reshape(-1, h, w)


@dataclass
class TranslationState:
    rs: np.ndarray
    raw: np.ndarray
    acts: Optional[list] = None


class RoughnessTranslator:
    """Maps surface roughness R (and depth) to screen-space roughness R_s"""

    def __init__(self, opts: Optional[FilterOpts] = None, net: Optional[ConvNetSpec] = None):
        self.opts = opts or FilterOpts()
        if net is None and self.opts.translate.startswith("net:"):
            net = load_network(self.opts.translate[4:])
        self.net = ConvNet(net) if net is not None else None

    @property
    def mode(self) -> str:
        return "net" if self.net is not None else "analytic"

    def forward(self, roughness: np.ndarray, depth: np.ndarray) -> TranslationState:
        if roughness.shape != depth.shape:
            raise ShapeMismatchError("roughness and depth images differ in shape")
        if self.net is not None:
            raw, acts = self.net.forward(np.stack([roughness, depth]).astype(np.float64))
            return TranslationState(rs=np.clip(raw, 0.0, 1.0), raw=raw, acts=acts)
        raw = self.opts.c0 * roughness / (1.0 + self.opts.c1 * depth)
        return TranslationState(rs=np.clip(raw, 0.0, 1.0), raw=raw)

    def backward(self, state: TranslationState, grad_rs: np.ndarray,
                 depth: np.ndarray) -> np.ndarray:
        """d(loss)/d(R); the clamp passes gradient on its closed range"""
        g = grad_rs * ((state.raw >= 0.0) & (state.raw <= 1.0))
        if self.net is not None:
            return self.net.backward(state.acts, g)[0]
        return g * self.opts.c0 / (1.0 + self.opts.c1 * depth)


def translate_roughness(roughness: np.ndarray, depth: np.ndarray,
                        net: Optional[ConvNetSpec] = None, opts: Optional[FilterOpts] = None) -> np.ndarray:
    return RoughnessTranslator(opts, net).forward(np.asarray(roughness, dtype=np.float64),
                                                  np.asarray(depth, dtype=np.float64)).rs


# ---------------------------------------------------------------- glossy term

@dataclass
class FilterState:
    translation: TranslationState
    indirect: FilteredImage
    visibility: FilteredImage
    glossy: np.ndarray


def filter_specular(spec: SpecularBuffers, roughness: np.ndarray, depth: np.ndarray,
                    translator: Optional[RoughnessTranslator] = None,
                    opts: Optional[FilterOpts] = None) -> FilterState:
    """G = F (L_ind' + L_dir V') with L_ind and V sampled from their pyramids at R_s"""
    opts = opts or FilterOpts()
    translator = translator or RoughnessTranslator(opts)
    if spec.indirect.shape[:2] != roughness.shape or roughness.shape != depth.shape:
        raise ShapeMismatchError("specular buffers, roughness and depth differ in shape")
    tr = translator.forward(roughness, depth)
    ind = filter_image(spec.indirect, tr.rs, opts.levels)
    vis = filter_image(spec.visibility, tr.rs, opts.levels)
    glossy = spec.fresnel * (ind.value + spec.direct * vis.value[..., None])
    return FilterState(translation=tr, indirect=ind, visibility=vis, glossy=glossy)
