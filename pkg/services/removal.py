"""
Object removal: coarse deletion, inpainting masks, reference views,
material-map tasks and back-projected initialization of new primitives
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from config import Config
from models.buffers import TASK_CHANNELS, GBuffer, InpaintTask
from models.errors import BackprojectionError, ReferenceSelectionError
from models.scene import Camera, GaussianCloud, Scene
from utils.geometry import normalize
from utils.logger import kv, setup_logger

from .renderer import Renderer

logger = setup_logger("removal")

REFERENCE_COUNT = 3
INIT_VALUE = 0.5
CHANGE_EPS = 1e-4


@dataclass
class RemovalDiagnostics:
    removed: int = 0
    warnings: List[str] = field(default_factory=list)
    mask_areas: Dict[int, int] = field(default_factory=dict)
    references: List[int] = field(default_factory=list)
    new_primitives: int = 0


def coarse_remove(scene: Scene, label_thresh: float = Config.LABEL_THRESH,
                  diagnostics: Optional[RemovalDiagnostics] = None) -> Tuple[Scene, int]:
    """Drop every primitive with label >= label_thresh; the input scene is left untouched"""
    if not 0.0 < label_thresh < 1.0:
        raise ValueError("label_thresh must lie in (0, 1)")
    keep = np.asarray(scene.gaussians.label) < label_thresh
    removed = int((~keep).sum())
    if removed == 0:
        message = "no primitive reached the label threshold; target absent"
        logger.warning(message)
        if diagnostics is not None:
            diagnostics.warnings.append(message)
    if diagnostics is not None:
        diagnostics.removed = removed
    logger.info(kv(removed=removed, remaining=int(keep.sum())))
    return scene.with_gaussians(scene.gaussians.subset(keep)), removed


def _changed(before: GBuffer, after: GBuffer) -> np.ndarray:
    changed = np.zeros(before.shape, dtype=bool)
    for name in ("alpha", "depth", "normal", "diffuse", "fresnel", "roughness", "region", "shaded_diffuse"):
        diff = np.abs(getattr(after, name) - getattr(before, name))
        changed |= (diff.max(axis=-1) if diff.ndim == 3 else diff) > CHANGE_EPS
    return changed


def _observed_elsewhere(points: np.ndarray, view: int, cams: Sequence[Camera],
                        before: Sequence[GBuffer], depth_gap: float, a_min: float) -> np.ndarray:
    """Points that some other view of the pre-removal scene sees unoccluded"""
    seen = np.zeros(points.shape[0], dtype=bool)
    for j, cam in enumerate(cams):
        if j == view or not points.size:
            continue
        uv, z = cam.project(points)
        px = np.round(uv[:, 0])
        py = np.round(uv[:, 1])
        inside = (z > cam.near) & (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
        if not inside.any():
            continue
        xi = px[inside].astype(np.int64)
        yi = py[inside].astype(np.int64)
        gb = before[j]
        visible = (gb.alpha[yi, xi] >= a_min) & (gb.depth[yi, xi] >= z[inside] - depth_gap)
        idx = np.flatnonzero(inside)
        seen[idx[visible]] = True
    return seen


def gen_inpaint_masks(scene_before: Scene, scene_after: Scene, cams: Sequence[Camera],
                      renderer: Optional[Renderer] = None, depth_gap: float = Config.DEPTH_GAP,
                      a_min: float = Config.MASK_ALPHA_MIN) -> List[np.ndarray]:
    """
    Per-view masks of content exposed by the removal and never observed before it

    A pixel is exposed when it lies in the pre-removal object mask and the
    surface behind it moved back by more than depth_gap or disappeared.
    Exposed surface points seen unoccluded by another pre-removal view are
    dropped. Masks are dilated by one pixel and kept only where the
    pre/post G-buffers differ.
    """
    renderer = renderer or Renderer(scene_before.env)
    before = [renderer.rasterize(scene_before, cam) for cam in cams]
    after = [renderer.rasterize(scene_after, cam) for cam in cams]
    masks = []
    for i, cam in enumerate(cams):
        gb_b, gb_a = before[i], after[i]
        exposed = (gb_b.object_mask >= 0.5) & (
            (gb_a.depth - gb_b.depth > depth_gap) | (gb_a.alpha < a_min))
        surface = exposed & (gb_a.alpha >= a_min)
        if surface.any():
            ys, xs = np.nonzero(surface)
            pts = cam.unproject(xs.astype(np.float64), ys.astype(np.float64), gb_a.depth[surface])
            seen = _observed_elsewhere(pts, i, cams, before, depth_gap, a_min)
            exposed[ys[seen], xs[seen]] = False
        mask = ndimage.binary_dilation(exposed, structure=np.ones((3, 3), dtype=bool))
        mask &= _changed(gb_b, gb_a)
        masks.append(mask)
        logger.debug(kv(view=i, exposed=int(exposed.sum()), mask=int(mask.sum())))
    return masks


def select_reference_views(masks: Sequence[np.ndarray], count: int = REFERENCE_COUNT,
                           diagnostics: Optional[RemovalDiagnostics] = None) -> List[int]:
    """Ids of the largest masks, ties broken by ascending view id"""
    if len(masks) < count:
        raise ReferenceSelectionError(f"need at least {count} views, got {len(masks)}")
    areas = [int(np.count_nonzero(m)) for m in masks]
    order = sorted(range(len(areas)), key=lambda i: (-areas[i], i))[:count]
    nonzero = sum(1 for i in order if areas[i] > 0)
    if nonzero < count:
        message = f"only {nonzero} reference views have a nonempty inpainting mask"
        logger.warning(message)
        if diagnostics is not None:
            diagnostics.warnings.append(message)
    if diagnostics is not None:
        diagnostics.mask_areas = dict(enumerate(areas))
        diagnostics.references = list(order)
    return order


def build_inpaint_tasks(renderer: Renderer, scene: Scene, masks: Sequence[np.ndarray],
                        views: Sequence[int]) -> List[InpaintTask]:
    """Render the post-removal maps of each reference view"""
    tasks = []
    for v in views:
        result = renderer.render(scene, scene.cameras[v])
        maps = result.material_maps()
        tasks.append(InpaintTask(view_id=v, mask=np.asarray(masks[v], dtype=bool),
                                 maps={name: np.array(maps[name], copy=True) for name in TASK_CHANNELS}))
    return tasks


def _masked_pixels(task: InpaintTask, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.nonzero(task.mask)
    keep = (xs % stride == 0) & (ys % stride == 0)
    ys, xs = ys[keep], xs[keep]
    depth = task.inpainted["depth"][ys, xs]
    ok = depth > 0
    return xs[ok], ys[ok]


def backproject_init(tasks: Sequence[InpaintTask], cams: Sequence[Camera], survivors: GaussianCloud,
                     stride: int = Config.STRIDE) -> GaussianCloud:
    """
    One new primitive per masked pixel of each reference view

    Positions come from the inpainted depth; scale, rotation and opacity are
    copied from the nearest surviving primitive; materials and color start
    at 0.5, region and normal from the inpainted maps.
    """
    if survivors.count == 0:
        raise BackprojectionError("no surviving primitives to copy geometry from")
    if stride < 1:
        raise ValueError("stride must be positive")
    tree = cKDTree(np.asarray(survivors.position, dtype=np.float64))
    dtype = survivors.position.dtype
    parts = []
    for task in tasks:
        cam = cams[task.view_id]
        xs, ys = _masked_pixels(task, stride)
        if not xs.size:
            continue
        pos = cam.unproject(xs.astype(np.float64), ys.astype(np.float64), task.inpainted["depth"][ys, xs])
        _, nearest = tree.query(pos)
        normal = task.inpainted["normal"][ys, xs]
        facing = -cam.pixel_directions()[ys, xs]
        bad = np.linalg.norm(normal, axis=-1) < 1e-6
        normal = normalize(np.where(bad[:, None], facing, normal))
        n = xs.size
        half = np.full((n, 3), INIT_VALUE)
        parts.append(GaussianCloud(
            position=pos.astype(dtype),
            scale=survivors.scale[nearest].copy(),
            rotation=survivors.rotation[nearest].copy(),
            opacity=survivors.opacity[nearest].copy(),
            color=half.astype(dtype), diffuse=half.astype(dtype), fresnel0=half.astype(dtype),
            roughness=np.full(n, INIT_VALUE, dtype), label=np.zeros(n, dtype),
            region=np.clip(task.inpainted["region"][ys, xs], 0.0, 1.0).astype(dtype),
            normal=normal.astype(dtype),
            sh_rest=np.zeros((n, survivors.sh_rest.shape[1], 3), dtype),
        ))
    if not parts:
        return GaussianCloud.empty(survivors.sh_degree, dtype)
    out = parts[0]
    for extra in parts[1:]:
        out = out.concat(extra)
    logger.info(kv(new_primitives=out.count, stride=stride))
    return out


def project_reference_cloud(tasks: Sequence[InpaintTask], cams: Sequence[Camera], view: int,
                            depth: Optional[np.ndarray] = None, depth_gap: float = Config.DEPTH_GAP
                            ) -> InpaintTask:
    """
    Sparse inpainting targets for a non-reference view

    Masked pixels of every reference task are lifted with their inpainted
    depth and z-buffered into `view`. When the view's own depth is given,
    points hidden behind it are dropped.
    """
    cam = cams[view]
    height, width = cam.shape
    zbuf = np.full((height, width), np.inf)
    targets: Dict[str, np.ndarray] = {}
    for task in tasks:
        if not targets:
            targets = {name: np.zeros((height, width) + arr.shape[2:]) for name, arr in task.inpainted.items()}
        src = cams[task.view_id]
        xs, ys = _masked_pixels(task, 1)
        if not xs.size:
            continue
        pts = src.unproject(xs.astype(np.float64), ys.astype(np.float64), task.inpainted["depth"][ys, xs])
        uv, z = cam.project(pts)
        px = np.round(uv[:, 0])
        py = np.round(uv[:, 1])
        ok = (z > cam.near) & (px >= 0) & (px < width) & (py >= 0) & (py < height)
        for k in np.flatnonzero(ok):
            x, y = int(px[k]), int(py[k])
            if z[k] >= zbuf[y, x]:
                continue
            if depth is not None and depth[y, x] > 0 and z[k] > depth[y, x] + depth_gap:
                continue
            zbuf[y, x] = z[k]
            for name, arr in task.inpainted.items():
                targets[name][y, x] = z[k] if name == "depth" else arr[ys[k], xs[k]]
    mask = np.isfinite(zbuf)
    return InpaintTask(view_id=view, mask=mask, maps={}, inpainted=targets)
