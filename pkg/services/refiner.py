"""
Material refinement after removal: masked supervision on training views,
inpainting supervision on reference views, Adam on material attributes
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from models.buffers import InpaintTask
from models.errors import EmptySelectionError, RefineDivergedError, ShapeMismatchError
from models.scene import MATERIAL_ATTRIBUTES, Camera, GaussianCloud, Scene
from models.schemas import LossWeights, RefineOptions
from utils.logger import kv, setup_logger

from . import losses
from .gradients import render_grad_materials
from .rasterizer import composite_samples
from .renderer import Renderer, RenderResult

logger = setup_logger("refine")

# Valid range of every optimized attribute; None = unbounded
CLAMP = {
    "diffuse": (0.0, 1.0), "fresnel0": (0.0, 1.0), "roughness": (0.0, 1.0),
    "label": (0.0, 1.0), "region": (0.0, 1.0), "color": (0.0, None), "sh_rest": (None, None),
}

TRACE_COLUMNS = ("step", "view", "reference", "color", "distortion", "depth_normal", "normal",
                 "region", "appearance", "material", "inpaint", "total")


@dataclass
class TrainingView:
    """Supervision of one view; exclude = inpainting | lighting-aware | object mask"""
    view_id: int
    camera: Camera
    rgb: np.ndarray
    exclude: np.ndarray
    normal: Optional[np.ndarray] = None
    rough: Optional[np.ndarray] = None          # M_gt, True = rough
    inpaint: Optional[InpaintTask] = None       # completed task of a reference view
    sparse: Optional[InpaintTask] = None        # projected reference targets

    def __post_init__(self):
        shape = self.camera.shape
        for name in ("rgb", "exclude", "normal", "rough"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[:2] != shape:
                raise ShapeMismatchError(f"view {self.view_id}: {name} {arr.shape[:2]} != {shape}")


@dataclass
class RefineResult:
    scene: Scene
    trace: List[Dict[str, float]] = field(default_factory=list)


class Adam:
    """Adam over a dict of float64 arrays"""

    def __init__(self, params: Dict[str, np.ndarray], lrs: Dict[str, float], options: RefineOptions):
        self.params = params
        self.lrs = lrs
        self.beta1 = options.beta1
        self.beta2 = options.beta2
        self.eps = options.eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p -= self.lrs[name] * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            lo, hi = CLAMP[name]
            if lo is not None or hi is not None:
                np.clip(p, lo, hi, out=p)


def _add(dst: Dict[str, np.ndarray], src: Dict[str, np.ndarray]):
    for name, g in src.items():
        dst[name] = dst[name] + g if name in dst else g


def stage_losses(result: RenderResult, view: TrainingView, weights: LossWeights,
                 distortion: float) -> tuple:
    """Non-inpaint supervision outside view.exclude; returns (terms, grad_color, grad_maps)"""
    gb = result.gbuffer
    terms: Dict[str, float] = {"distortion": distortion}
    grad_maps: Dict[str, np.ndarray] = {}
    try:
        terms["color"], grad_color = losses.loss_color(result.color, view.rgb, view.exclude, return_grad=True)
    except EmptySelectionError:
        terms["color"], grad_color = 0.0, np.zeros_like(result.color)

    terms["depth_normal"] = losses.loss_depth_normal(gb.normal, gb.depth, view.camera, gb.alpha,
                                                     mask=view.exclude)
    if view.rough is not None:
        glossy_gt = 1.0 - np.asarray(view.rough, dtype=np.float64)
        terms["region"], g_region = losses.loss_region(gb.region, glossy_gt, view.exclude, return_grad=True)
        grad_maps["region"] = weights.lambda_region * g_region
        if view.normal is not None:
            terms["normal"] = losses.loss_normal(gb.normal, view.normal, glossy_gt, view.exclude)
    terms.setdefault("region", 0.0)
    terms.setdefault("normal", 0.0)
    return terms, grad_color, grad_maps


def inpaint_losses(result: RenderResult, task: InpaintTask, weights: LossWeights,
                   select: Optional[np.ndarray] = None) -> tuple:
    """lambda_A L_A + lambda_M L_M against a completed task; returns (terms, grad_color, grad_maps)"""
    target = task.inpainted
    mask = task.mask if select is None else task.mask & select
    region_hat = target["region"]
    rendered = result.material_maps()
    app, g_color = losses.loss_appearance(result.color, target["color"], region_hat, mask, return_grad=True)
    mat, g_maps = losses.loss_material(rendered, target, region_hat, mask, return_grad=True)
    grad_maps = {k: weights.lambda_m * g for k, g in g_maps.items() if k != "normal"}
    terms = {"appearance": app, "material": mat, "inpaint": weights.lambda_a * app + weights.lambda_m * mat}
    return terms, weights.lambda_a * g_color, grad_maps


def _total(stage: Dict[str, float], inpaint: Dict[str, float], w: LossWeights) -> float:
    return (stage["color"] + w.lambda_d * stage["distortion"] + w.lambda_dn * stage["depth_normal"]
            + w.lambda_n * stage["normal"] + w.lambda_region * stage["region"] + inpaint.get("inpaint", 0.0))


def refine(scene: Scene, views: Sequence[TrainingView], weights: Optional[LossWeights] = None,
           options: Optional[RefineOptions] = None, renderer: Optional[Renderer] = None,
           trace_path: Optional[str] = None) -> RefineResult:
    """
    Optimize material attributes with geometry and environment frozen

    Each step renders one random training view for the masked stage losses
    and one random reference view for the inpainting loss, then takes one
    Adam step and clamps attributes to their valid ranges.
    """
    weights = weights or LossWeights()
    options = options or RefineOptions()
    renderer = renderer or Renderer(scene.env)
    if options.steps == 0 or not views:
        return RefineResult(scene=scene)

    cloud = scene.gaussians.astype(np.float64)
    params = {name: getattr(cloud, name) for name in MATERIAL_ATTRIBUTES}
    lrs = {name: options.lr_sh if name == "sh_rest" else options.lr_material for name in MATERIAL_ATTRIBUTES}
    adam = Adam(params, lrs, options)
    current = scene.with_gaussians(cloud)

    references = [v for v in views if v.inpaint is not None]
    distortion = {}
    for v in views:
        samples = composite_samples(current, v.camera, renderer.raster_opts,
                                    weights=renderer.weights_for(cloud, v.camera))
        distortion[v.view_id] = losses.loss_depth_distortion(samples)

    rng = np.random.default_rng(options.seed)
    trace: List[Dict[str, float]] = []
    initial = None
    for step in range(options.steps):
        view = views[int(rng.integers(len(views)))]
        grads = {name: np.zeros_like(p) for name, p in params.items()}

        result = renderer.render(current, view.camera)
        stage, g_color, g_maps = stage_losses(result, view, weights, distortion[view.view_id])
        inpaint: Dict[str, float] = {"appearance": 0.0, "material": 0.0, "inpaint": 0.0}
        if view.sparse is not None and view.inpaint is None:
            sp_terms, sp_color, sp_maps = inpaint_losses(result, view.sparse, weights, select=view.exclude)
            g_color = g_color + sp_color
            _add(g_maps, sp_maps)
            for k in inpaint:
                inpaint[k] += sp_terms[k]
        _add(grads, render_grad_materials(current, view.camera, result, g_color, g_maps))

        ref = None
        if references:
            ref = references[int(rng.integers(len(references)))]
            ref_result = renderer.render(current, ref.camera)
            ref_terms, ref_color, ref_maps = inpaint_losses(ref_result, ref.inpaint, weights)
            for k in inpaint:
                inpaint[k] += ref_terms[k]
            _add(grads, render_grad_materials(current, ref.camera, ref_result, ref_color, ref_maps))

        total = _total(stage, inpaint, weights)
        if initial is None:
            initial = total
        elif initial > 0 and total > options.divergence_factor * initial:
            raise RefineDivergedError(step, total, initial)

        row = {"step": step, "view": view.view_id, "reference": -1 if ref is None else ref.view_id,
               **stage, **inpaint, "total": total}
        trace.append({k: row[k] for k in TRACE_COLUMNS})
        if step % options.log_every == 0 or step == options.steps - 1:
            logger.info(kv(step=step, total=total, color=stage["color"], inpaint=inpaint["inpaint"]))

        adam.step(grads)

    refined = GaussianCloud(**{name: arr.astype(getattr(scene.gaussians, name).dtype)
                               for name, arr in cloud.arrays().items()})
    if trace_path:
        write_trace(trace, trace_path)
    return RefineResult(scene=scene.with_gaussians(refined), trace=trace)


def write_trace(trace: Sequence[Dict[str, float]], path) -> None:
    """Loss trace as CSV: step, each term, total"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(TRACE_COLUMNS))
        writer.writeheader()
        for row in trace:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})
