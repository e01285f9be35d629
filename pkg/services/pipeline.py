"""
End-to-end stages used by the command line: render, lighting masks,
removal with inpainting, and refinement, plus their on-disk layouts
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from scipy import ndimage

from models.buffers import TASK_CHANNELS, InpaintTask, LightingMask
from models.scene import Scene
from models.schemas import FilterOpts, RasterOpts, RemovalOptions, TraceOpts
from storage.image_io import read_pfm, read_png_mask, write_pfm, write_png_mask, write_png_rgb
from storage.scene_repository import load_scene, save_scene
from utils.logger import kv, setup_logger

from .inpaint_factory import InpainterFactory
from .inpainting import Inpainter, inpaint_2d
from .lighting_mask import lighting_mask, reflection_from_specular
from .refiner import TrainingView
from .removal import (RemovalDiagnostics, backproject_init, build_inpaint_tasks, coarse_remove,
                      gen_inpaint_masks, project_reference_cloud, select_reference_views)
from .renderer import Renderer, RenderResult
from .screen_filter import RoughnessTranslator

logger = setup_logger("pipeline")

MASK_DIR = "masks"
TASK_DIR = "tasks"
REMOVAL_FILE = "removal.json"


def make_renderer(scene: Scene, translate: str = "analytic", threads: int = 1) -> Renderer:
    filter_opts = FilterOpts(translate=translate)
    return Renderer(scene.env, raster_opts=RasterOpts(threads=threads), trace_opts=TraceOpts(threads=threads),
                    filter_opts=filter_opts, translator=RoughnessTranslator(filter_opts))


def object_mask(result: RenderResult) -> np.ndarray:
    """Rendered object mask dilated by one pixel"""
    return ndimage.binary_dilation(result.gbuffer.object_mask >= 0.5, structure=np.ones((3, 3), dtype=bool))


def compute_lighting_mask(renderer: Renderer, result: RenderResult, tau: float) -> LightingMask:
    e_obj = reflection_from_specular(result.specular, result.gbuffer, renderer.translator, renderer.filter_opts)
    return lighting_mask(e_obj, tau, object_mask(result))


def export_render(result: RenderResult, out_dir: Path, view: int, components: bool = False) -> List[str]:
    """render_<view>.png / .pfm and optionally one PFM per shading component"""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / f"render_{view}.png", out_dir / f"render_{view}.pfm"]
    write_png_rgb(written[0], result.color)
    write_pfm(written[1], result.color)
    if components:
        comps = dict(result.shade.components())
        comps["M"] = result.gbuffer.region
        for name, arr in comps.items():
            path = out_dir / f"{name}_{view}.pfm"
            write_pfm(path, arr)
            written.append(path)
    return [str(p) for p in written]


@dataclass
class RemovalOutput:
    scene: Scene                                   # survivors plus back-projected primitives
    masks: List[np.ndarray]                        # inpainting masks P per view
    lighting: List[LightingMask]
    tasks: List[InpaintTask]
    diagnostics: RemovalDiagnostics = field(default_factory=RemovalDiagnostics)

    def training_views(self) -> List[TrainingView]:
        return build_training_views(self.scene, self.masks, [lm.combined for lm in self.lighting], self.tasks)


def build_training_views(scene: Scene, masks: List[np.ndarray], lighting: List[np.ndarray],
                         tasks: List[InpaintTask], renderer: Optional[Renderer] = None) -> List[TrainingView]:
    """Supervision per view with references; exclude = P | M_r | object mask"""
    by_view = {t.view_id: t for t in tasks}
    renderer = renderer or Renderer(scene.env)
    views = []
    for i, cam in enumerate(scene.cameras):
        ref = scene.references.get(i)
        if ref is None or ref.rgb is None:
            continue
        exclude = np.asarray(masks[i], dtype=bool) | np.asarray(lighting[i], dtype=bool)
        sparse = None
        if i not in by_view and tasks:
            depth = renderer.rasterize(scene, cam).depth
            sparse = project_reference_cloud(tasks, scene.cameras, i, depth=depth)
        views.append(TrainingView(
            view_id=i, camera=cam, rgb=ref.rgb.astype(np.float64), exclude=exclude,
            normal=None if ref.normal is None else ref.normal.astype(np.float64),
            rough=ref.region_mask, inpaint=by_view.get(i), sparse=sparse,
        ))
    return views


def run_removal(scene: Scene, options: Optional[RemovalOptions] = None, renderer: Optional[Renderer] = None,
                inpainter: Optional[Inpainter] = None) -> RemovalOutput:
    """Lighting masks, coarse removal, inpainting masks, references, inpainting and back-projection"""
    options = options or RemovalOptions()
    renderer = renderer or Renderer(scene.env)
    inpainter = inpainter or InpainterFactory.create(options.inpainter, options.fallback_baseline)
    diagnostics = RemovalDiagnostics()

    lighting = []
    for cam in scene.cameras:
        lighting.append(compute_lighting_mask(renderer, renderer.render(scene, cam), options.tau))

    after, _ = coarse_remove(scene, options.label_thresh, diagnostics)
    masks = gen_inpaint_masks(scene, after, scene.cameras, renderer, options.depth_gap, options.alpha_min)
    refs = select_reference_views(masks, diagnostics=diagnostics)
    tasks = [inpaint_2d(t, inpainter) for t in build_inpaint_tasks(renderer, after, masks, refs)]
    new = backproject_init(tasks, scene.cameras, after.gaussians, options.stride)
    diagnostics.new_primitives = new.count
    edited = after.with_gaussians(after.gaussians.concat(new))
    logger.info(kv(removed=diagnostics.removed, references=refs, new_primitives=new.count))
    return RemovalOutput(scene=edited, masks=masks, lighting=lighting, tasks=tasks, diagnostics=diagnostics)


def save_removal(output: RemovalOutput, root, renderer: Optional[Renderer] = None) -> List[str]:
    """Edited scene plus masks/, tasks/, removal.json and post-removal renders"""
    root = Path(root)
    save_scene(output.scene, root)
    written = [str(root / "scene.json")]
    mask_dir = root / MASK_DIR
    mask_dir.mkdir(parents=True, exist_ok=True)
    for i, (mask, lm) in enumerate(zip(output.masks, output.lighting)):
        write_png_mask(mask_dir / f"inpaint_{i}.png", mask)
        write_png_mask(mask_dir / f"reflection_{i}.png", lm.reflection)
        write_png_mask(mask_dir / f"exclude_{i}.png", lm.combined)
        write_pfm(mask_dir / f"e_obj_{i}.pfm", lm.e_obj)
    for task in output.tasks:
        task_dir = root / TASK_DIR / str(task.view_id)
        task_dir.mkdir(parents=True, exist_ok=True)
        write_png_mask(task_dir / "mask.png", task.mask)
        for name, arr in task.inpainted.items():
            write_pfm(task_dir / f"{name}.pfm", arr)
    d = output.diagnostics
    meta = {"removed": d.removed, "references": d.references, "mask_areas": d.mask_areas,
            "new_primitives": d.new_primitives, "warnings": d.warnings, "views": len(output.masks),
            "tau": output.lighting[0].tau if output.lighting else None}
    (root / REMOVAL_FILE).write_text(json.dumps(meta, indent=2))
    written.append(str(root / REMOVAL_FILE))

    renderer = renderer or Renderer(output.scene.env)
    for i, cam in enumerate(output.scene.cameras):
        written += export_render(renderer.render(output.scene, cam), root, i)
    return written


def load_removal(root) -> RemovalOutput:
    """Inverse of save_removal; renders are not reloaded"""
    root = Path(root)
    scene = load_scene(root)
    meta = json.loads((root / REMOVAL_FILE).read_text())
    masks, lighting = [], []
    for i in range(int(meta["views"])):
        masks.append(read_png_mask(root / MASK_DIR / f"inpaint_{i}.png"))
        e_obj = read_pfm(root / MASK_DIR / f"e_obj_{i}.pfm").astype(np.float64)
        reflection = read_png_mask(root / MASK_DIR / f"reflection_{i}.png")
        combined = read_png_mask(root / MASK_DIR / f"exclude_{i}.png")
        lighting.append(LightingMask(e_obj=e_obj, reflection=reflection, tau=float(meta.get("tau") or 0.0), combined=combined))
    tasks = []
    for view in meta["references"]:
        task_dir = root / TASK_DIR / str(view)
        inpainted: Dict[str, np.ndarray] = {
            name: read_pfm(task_dir / f"{name}.pfm").astype(np.float64) for name in TASK_CHANNELS}
        tasks.append(InpaintTask(view_id=int(view), mask=read_png_mask(task_dir / "mask.png"),
                                 maps={}, inpainted=inpainted))
    diagnostics = RemovalDiagnostics(removed=meta["removed"], warnings=list(meta["warnings"]),
                                     mask_areas={int(k): v for k, v in meta["mask_areas"].items()},
                                     references=list(meta["references"]), new_primitives=meta["new_primitives"])
    return RemovalOutput(scene=scene, masks=masks, lighting=lighting, tasks=tasks, diagnostics=diagnostics)
