"""
Backward pass of the renderer w.r.t. per-primitive material attributes, and a
finite-difference harness that checks it
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import ShapeMismatchError, StaleCacheError
from models.scene import MATERIAL_ATTRIBUTES, Camera, Scene
from utils.logger import kv, setup_logger

from . import rasterizer
from .renderer import Renderer, RenderResult, scene_fingerprint
from .screen_filter import filter_image_backward
from .tracer import trace_backward

logger = setup_logger("gradients")

# G-buffer maps a loss may supervise, mapped onto composited feature columns
MAP_FEATURES = {
    "diffuse": rasterizer.FEATURES["diffuse"],
    "fresnel": rasterizer.FEATURES["fresnel"],
    "roughness": rasterizer.FEATURES["roughness"],
    "region": rasterizer.FEATURES["region"],
    "object_mask": rasterizer.FEATURES["object_mask"],
}


def render_grad_materials(scene: Scene, cam: Camera, result: RenderResult,
                          grad_color: Optional[np.ndarray] = None,
                          grad_maps: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, np.ndarray]:
    """
    Per-primitive gradients of a pixel loss w.r.t. material attributes

    Geometry, traced hit sets and the glossy/rough gate are constants; the
    chain runs through compose, filter, Fresnel, trace compositing and
    alpha blending.

    Args:
        scene: scene that produced result
        cam: camera that produced result
        result: forward cache from Renderer.render
        grad_color: d(loss)/d(C), (H,W,3)
        grad_maps: d(loss)/d(G-buffer map) keyed by map name; normal and
            depth carry no material dependence and are ignored

    Returns:
        dict keyed by MATERIAL_ATTRIBUTES
    """
    if scene_fingerprint(scene.gaussians, cam) != result.fingerprint:
        raise StaleCacheError("forward cache was produced by a different scene or camera")
    height, width = cam.shape
    gb = result.gbuffer
    spec = result.specular
    fs = result.filtered

    g_comp = np.zeros((height, width, rasterizer.N_FEATURES))
    g_rough = np.zeros((height, width))
    g_ind = None

    if grad_color is not None:
        grad_color = np.asarray(grad_color, dtype=np.float64)
        if grad_color.shape != (height, width, 3):
            raise ShapeMismatchError(f"color gradient {grad_color.shape} does not match view {(height, width)}")
        g_comp[..., rasterizer.FEATURES["shaded_diffuse"]] += grad_color
        g_comp[..., 7] -= np.sum(grad_color * fs.glossy, axis=-1)
        g_glossy = (1.0 - gb.region)[..., None] * grad_color

        # G = F (L_ind' + L_dir V')
        lf = fs.indirect.value
        vf = fs.visibility.value[..., None]
        g_fres = g_glossy * (lf + spec.direct * vf)
        g_lf = g_glossy * spec.fresnel
        g_ld = g_lf * vf
        g_vf = np.sum(g_lf * spec.direct, axis=-1)

        traced = spec.traced
        g_comp[..., rasterizer.FEATURES["fresnel"]] += np.where(
            traced[..., None], g_fres * (1.0 - result.fresnel_k[..., None]), 0.0)
        g_rough += np.sum(g_ld * result.direct_slope, axis=-1)

        g_rs = np.sum(g_lf * fs.indirect.slope, axis=-1) + g_vf * fs.visibility.slope
        translator_grad = result.translator.backward(fs.translation, g_rs, gb.depth)
        g_rough += translator_grad

        g_ind = filter_image_backward(fs.indirect, g_lf)[traced]

    g_comp[..., 6] += g_rough
    for name, grad in (grad_maps or {}).items():
        if name not in MAP_FEATURES:
            continue
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape[:2] != (height, width):
            raise ShapeMismatchError(f"{name} gradient {grad.shape} does not match view {(height, width)}")
        g_comp[..., MAP_FEATURES[name]] += grad.reshape(height, width, -1)

    grads = rasterizer.backward(result.weights, result.features, g_comp)
    if g_ind is not None and g_ind.size:
        color, sh, label = trace_backward(result.bvh, scene, result.ray_origins, result.ray_dirs, g_ind)
        grads["color"] = grads["color"] + color
        grads["sh_rest"] = grads["sh_rest"] + sh
        grads["label"] = grads["label"] + label
    return {name: grads[name] for name in MATERIAL_ATTRIBUTES}


# ---------------------------------------------------------------- finite differences

# Pixel loss: result -> (value, grad_color, grad_maps)
PixelLoss = Callable[[RenderResult], Tuple[float, Optional[np.ndarray], Optional[Dict[str, np.ndarray]]]]


@dataclass
class GradReport:
    """Analytic vs central-difference comparison, relative error |a-f| / max(|a|,|f|,1e-6)"""
    max_rel: Dict[str, float] = field(default_factory=dict)
    mean_rel: Dict[str, float] = field(default_factory=dict)
    checked: Dict[str, int] = field(default_factory=dict)
    skipped: List[Tuple[str, int, int]] = field(default_factory=list)
    failing: List[Tuple[str, int, int, float, float, float]] = field(default_factory=list)
    tolerance: float = 1e-3

    @property
    def passed(self) -> bool:
        return not self.failing

    @property
    def worst(self) -> float:
        return max(self.max_rel.values(), default=0.0)


def relative_error(a: float, f: float) -> float:
    return abs(a - f) / max(abs(a), abs(f), 1e-6)


def _coordinates(grad: np.ndarray, count: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    flat = grad.reshape(grad.shape[0], -1)
    if flat.size == 0:
        return []
    order = np.argsort(-np.abs(flat).ravel(), kind="stable")
    strong = [divmod(int(k), flat.shape[1]) for k in order[:count // 2]]
    extra = rng.choice(flat.size, size=min(count - len(strong), flat.size), replace=False)
    coords = strong + [divmod(int(k), flat.shape[1]) for k in extra]
    seen = []
    for c in coords:
        if c not in seen:
            seen.append(c)
    return seen


def check_material_gradients(scene: Scene, cam: Camera, loss: PixelLoss, renderer: Renderer,
                             attributes: Sequence[str] = MATERIAL_ATTRIBUTES, h: float = 1e-3,
                             samples: int = 8, tolerance: float = 1e-3, kink: float = 0.05,
                             seed: int = 0) -> GradReport:
    """
    Compare render_grad_materials against central differences

    Coordinates whose one-sided differences disagree by more than `kink`
    (a gate, clamp or mip-level boundary inside +-h) are skipped.
    """
    rng = np.random.default_rng(seed)
    base = scene.with_gaussians(scene.gaussians.astype(np.float64))
    result = renderer.render(base, cam)
    f0, g_color, g_maps = loss(result)
    analytic = render_grad_materials(base, cam, result, g_color, g_maps)

    def evaluate(name, prim, comp, delta):
        cloud = base.gaussians.copy()
        arr = getattr(cloud, name)
        arr.reshape(arr.shape[0], -1)[prim, comp] += delta
        return loss(renderer.render(base.with_gaussians(cloud), cam))[0]

    report = GradReport(tolerance=tolerance)
    for name in attributes:
        grad = analytic[name]
        errors = []
        for prim, comp in _coordinates(grad, samples, rng):
            fp = evaluate(name, prim, comp, h)
            fm = evaluate(name, prim, comp, -h)
            right = (fp - f0) / h
            left = (f0 - fm) / h
            if abs(right - left) > kink * max(abs(right), abs(left)) + 1e-7:
                report.skipped.append((name, prim, comp))
                continue
            a = float(grad.reshape(grad.shape[0], -1)[prim, comp])
            f = (fp - fm) / (2.0 * h)
            err = relative_error(a, f)
            errors.append(err)
            if err > tolerance:
                report.failing.append((name, prim, comp, a, f, err))
        report.checked[name] = len(errors)
        report.max_rel[name] = max(errors, default=0.0)
        report.mean_rel[name] = float(np.mean(errors)) if errors else 0.0
        logger.debug(kv(attribute=name, checked=len(errors), max_rel=report.max_rel[name]))
    logger.info(kv(gradcheck="done", worst=report.worst, failing=len(report.failing),
                   skipped=len(report.skipped)))
    return report
