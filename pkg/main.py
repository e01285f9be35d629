"""
glossremove command line

    python main.py gen --preset mirror-sphere --out s/
    python main.py render s/ --view 0 --dump-components
    python main.py remove s/ --out r/
    python main.py refine r/ --out f/ --steps 500
    python main.py metrics f/render_0.png s_gt/render_0.png
"""
import argparse
import difflib
import json
import sys
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from config import Config
from models.errors import GlossRemoveError
from models.schemas import LossWeights, RefineOptions, RemovalOptions, RunManifest
from services import metrics
from services.inpaint_factory import InpainterFactory
from services.pipeline import (build_training_views, compute_lighting_mask, export_render, load_removal,
                               make_renderer, run_removal, save_removal)
from services.rasterizer import export_gbuffer
from services.refiner import refine
from services.scene_generator import PRESETS, gen_synthetic_scene, preset
from services.tracer import build_bvh, trace_debug
from storage.image_io import read_image, read_mask, write_pfm, write_png_mask, write_png_rgb
from storage.scene_repository import load_scene, save_scene
from utils.logger import kv, setup_logger

logger = setup_logger("cli")

MANIFEST_FILE = "run.json"
SUBSTITUTIONS = {
    "L_A": "masked L1 substitute for LPIPS",
    "depth": "alpha-weighted mean of primitive depths",
}
VERSIONED = ("numpy", "scipy", "numba", "pillow", "pydantic")


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises on usage errors and suggests close flags"""

    def error(self, message):
        if "unrecognized arguments" in message:
            known = [s for a in self._actions for s in a.option_strings]
            for token in message.split(":", 1)[-1].split():
                close = difflib.get_close_matches(token.split("=")[0], known, n=1)
                if close:
                    message += f" (did you mean {close[0]}?)"
                    break
        raise UsageError(f"{self.prog}: {message}")


def _flag(parser, name: str, default, **kwargs):
    """Add --name with a default overridable by GLOSSREMOVE_<NAME>"""
    value = Config.flag_default(name, default)
    if isinstance(default, bool):
        parser.add_argument(name, action=argparse.BooleanOptionalAction, default=value, **kwargs)
    else:
        parser.add_argument(name, type=type(default), default=value, **kwargs)


def _render_flags(parser):
    _flag(parser, "--threads", Config.THREADS, help="worker threads (1 = bitwise deterministic)")
    _flag(parser, "--roughness-translate", "analytic", help="'analytic' or 'net:<dir>'")


def build_parser() -> CliParser:
    parser = CliParser(prog="glossremove", description="Glossy-scene object removal on Gaussian splats")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("gen", help="generate a synthetic scene and its object-free twin")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="mirror-sphere")
    _flag(p, "--seed", Config.SEED)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--cameras", type=int)
    p.add_argument("--jitter", type=float, help="seeded in-plane offset of plane surfels, fraction of spacing")

    p = sub.add_parser("render", help="render views of a scene")
    p.add_argument("scene")
    p.add_argument("--out")
    p.add_argument("--view", type=int, help="single view, default all")
    p.add_argument("--dump-components", action="store_true")
    p.add_argument("--gbuffer", action="store_true", help="also export G-buffer channels")
    _render_flags(p)

    p = sub.add_parser("light-mask", help="lighting-aware masks of the labeled object")
    p.add_argument("scene")
    p.add_argument("--out")
    p.add_argument("--view", type=int)
    _flag(p, "--tau", Config.TAU)
    _render_flags(p)

    p = sub.add_parser("remove", help="remove the labeled object and inpaint")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    _flag(p, "--label-thresh", Config.LABEL_THRESH)
    _flag(p, "--tau", Config.TAU)
    _flag(p, "--stride", Config.STRIDE)
    _flag(p, "--inpainter", Config.INPAINTER, help="'baseline' or 'cmd:<exe>'")
    _flag(p, "--fallback-baseline", Config.FALLBACK_BASELINE)
    _render_flags(p)

    p = sub.add_parser("refine", help="refine materials of a removal result")
    p.add_argument("removal")
    p.add_argument("--out", required=True)
    _flag(p, "--steps", Config.STEPS)
    _flag(p, "--lr-material", Config.LR_MATERIAL)
    _flag(p, "--lr-sh", Config.LR_SH)
    _flag(p, "--seed", Config.SEED)
    for name, info in LossWeights.model_fields.items():
        _flag(p, "--" + name.replace("_", "-"), float(info.default))
    _render_flags(p)

    p = sub.add_parser("metrics", help="PSNR and SSIM of two images as JSON")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mask", help="PNG; nonzero pixels are evaluated")
    p.add_argument("--out")

    p = sub.add_parser("trace-debug", help="text dump of reflected-ray hit lists")
    p.add_argument("scene")
    p.add_argument("--view", type=int, default=0)
    p.add_argument("--pixel", action="append", default=[], metavar="X,Y")
    p.add_argument("--out")
    _render_flags(p)

    p = sub.add_parser("validate", help="load a scene and report invariant violations")
    p.add_argument("scene")
    p.add_argument("--out")
    return parser


def _views(scene, view: Optional[int]) -> List[int]:
    if view is None:
        return list(range(len(scene.cameras)))
    if not 0 <= view < len(scene.cameras):
        raise UsageError(f"view {view} out of range [0, {len(scene.cameras)})")
    return [view]


def cmd_gen(args) -> Dict:
    overrides = {"seed": args.seed}
    for name, key in (("width", "width"), ("height", "height"), ("cameras", "camera_count"),
                      ("jitter", "plane_jitter")):
        if getattr(args, name) is not None:
            overrides[key] = getattr(args, name)
    spec = preset(args.preset, **overrides)
    generated = gen_synthetic_scene(spec)
    out = Path(args.out)
    gt = out.with_name(out.name + "_gt")
    save_scene(generated.scene, out)
    save_scene(generated.ground_truth, gt)
    written = [str(out), str(gt)]
    for root, scene in ((out, generated.scene), (gt, generated.ground_truth)):
        for i, ref in scene.references.items():
            write_png_rgb(root / f"render_{i}.png", ref.rgb)
            write_pfm(root / f"render_{i}.pfm", ref.rgb)
            written.append(str(root / f"render_{i}.png"))
    return {"outputs": written, "diagnostics": {"primitives": generated.scene.gaussians.count,
                                                 "target": int(generated.target.sum())}}


def cmd_render(args) -> Dict:
    scene = load_scene(args.scene)
    renderer = make_renderer(scene, args.roughness_translate, args.threads)
    out = Path(args.out or args.scene)
    written = []
    for i in _views(scene, args.view):
        result = renderer.render(scene, scene.cameras[i])
        written += export_render(result, out, i, args.dump_components)
        if args.gbuffer:
            written += export_gbuffer(result.gbuffer, out / f"gbuffer_{i}")
        logger.info(kv(view=i, **{k: round(v, 4) for k, v in result.timings.items()}))
    return {"outputs": written}


def cmd_light_mask(args) -> Dict:
    scene = load_scene(args.scene)
    renderer = make_renderer(scene, args.roughness_translate, args.threads)
    out = Path(args.out or args.scene)
    out.mkdir(parents=True, exist_ok=True)
    written, areas = [], {}
    for i in _views(scene, args.view):
        lm = compute_lighting_mask(renderer, renderer.render(scene, scene.cameras[i]), args.tau)
        paths = [out / f"e_obj_{i}.pfm", out / f"reflection_{i}.png", out / f"combined_{i}.png"]
        write_pfm(paths[0], lm.e_obj)
        write_png_mask(paths[1], lm.reflection)
        write_png_mask(paths[2], lm.combined)
        written += [str(p) for p in paths]
        areas[i] = int(lm.reflection.sum())
        logger.info(kv(view=i, reflection=areas[i], combined=int(lm.combined.sum())))
    return {"outputs": written, "diagnostics": {"reflection_areas": areas}}


def cmd_remove(args) -> Dict:
    scene = load_scene(args.scene)
    renderer = make_renderer(scene, args.roughness_translate, args.threads)
    options = RemovalOptions(label_thresh=args.label_thresh, tau=args.tau, stride=args.stride,
                             inpainter=args.inpainter, fallback_baseline=args.fallback_baseline)
    out = Path(args.out)
    inpainter = InpainterFactory.create(options.inpainter, options.fallback_baseline,
                                        workdir=str(out / "inpaint_work"))
    output = run_removal(scene, options, renderer, inpainter)
    written = save_removal(output, out, renderer)
    d = output.diagnostics
    substitutions = getattr(inpainter, "substitutions", {})
    return {"outputs": written, "diagnostics": {
        "removed": d.removed, "references": d.references, "new_primitives": d.new_primitives,
        "warnings": d.warnings, "inpainter_fallbacks": {str(k): v for k, v in substitutions.items()}}}


def cmd_refine(args) -> Dict:
    removal = load_removal(args.removal)
    renderer = make_renderer(removal.scene, args.roughness_translate, args.threads)
    weights = LossWeights(**{name: getattr(args, name) for name in LossWeights.model_fields})
    options = RefineOptions(steps=args.steps, lr_material=args.lr_material, lr_sh=args.lr_sh, seed=args.seed)
    views = build_training_views(removal.scene, removal.masks, [lm.combined for lm in removal.lighting],
                                 removal.tasks, renderer)
    out = Path(args.out)
    result = refine(removal.scene, views, weights, options, renderer, trace_path=out / "trace.csv")
    save_scene(result.scene, out)
    written = [str(out / "scene.json"), str(out / "trace.csv")]
    for i, cam in enumerate(result.scene.cameras):
        written += export_render(renderer.render(result.scene, cam), out, i)
    final = result.trace[-1]["total"] if result.trace else None
    return {"outputs": written, "diagnostics": {"steps": len(result.trace), "final_total": final}}


def cmd_metrics(args) -> Dict:
    a = read_image(args.a)
    b = read_image(args.b)
    mask = read_mask(args.mask) if args.mask else None
    report = {"psnr": metrics.psnr(a, b, mask), "ssim": metrics.ssim(a, b, mask)}
    print(json.dumps(report))
    return {"diagnostics": report}


def _pixel(text: str):
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--pixel expects X,Y, got {text!r}")
    return x, y


def cmd_trace_debug(args) -> Dict:
    scene = load_scene(args.scene)
    renderer = make_renderer(scene, args.roughness_translate, args.threads)
    (view,) = _views(scene, args.view)
    cam = scene.cameras[view]
    bvh = build_bvh(scene, opts=renderer.trace_opts)
    result = renderer.render(scene, cam, bvh)
    traced = result.specular.traced
    order = -np.ones(traced.shape, dtype=np.int64)
    order[traced] = np.arange(int(traced.sum()))
    pixels = [_pixel(p) for p in args.pixel] or [tuple(int(v) for v in xy[::-1]) for xy in np.argwhere(traced)[:8]]
    rows = []
    for x, y in pixels:
        if not (0 <= x < cam.width and 0 <= y < cam.height) or order[y, x] < 0:
            logger.warning(kv(pixel=f"{x},{y}", traced=False))
            continue
        rows.append(int(order[y, x]))
    text = trace_debug(bvh, scene, result.ray_origins[rows], result.ray_dirs[rows])
    written = []
    if args.out:
        path = Path(args.out) / f"trace_{view}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(str(path))
    else:
        sys.stdout.write(text)
    return {"outputs": written, "diagnostics": {"rays": len(rows)}}


def cmd_validate(args) -> Dict:
    # load_scene raises SceneValidationError listing every violation
    scene = load_scene(args.scene)
    summary = {"primitives": scene.gaussians.count, "views": len(scene.cameras),
               "sh_degree": scene.gaussians.sh_degree, "valid": True}
    print(json.dumps(summary))
    return {"diagnostics": summary}


COMMANDS = {
    "gen": cmd_gen, "render": cmd_render, "light-mask": cmd_light_mask, "remove": cmd_remove,
    "refine": cmd_refine, "metrics": cmd_metrics, "trace-debug": cmd_trace_debug, "validate": cmd_validate,
}


def _versions() -> Dict[str, str]:
    versions = {"python": sys.version.split()[0]}
    for package in VERSIONED:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_manifest(args, report: Dict) -> Optional[Path]:
    out = getattr(args, "out", None) or getattr(args, "scene", None) or getattr(args, "removal", None)
    if out is None:
        return None
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "command"}
    manifest = RunManifest(
        subcommand=args.command, flags=flags, seed=getattr(args, "seed", None), versions=_versions(),
        substitutions=SUBSTITUTIONS, outputs=report.get("outputs", []),
        diagnostics=report.get("diagnostics", {}),
    )
    path = Path(out) / MANIFEST_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2))
    return path


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; 0 ok, 1 usage error, 2 data error"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        logger.error(str(e))
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    try:
        Config.validate()
        report = COMMANDS[args.command](args)
        if args.command not in ("metrics", "validate") or args.out:
            write_manifest(args, report)
    except UsageError as e:
        logger.error(str(e))
        return 1
    except (GlossRemoveError, ValidationError, OSError, ValueError) as e:
        logger.error(kv(command=args.command, error=type(e).__name__) + f" {e}")
        return 2
    logger.info(kv(command=args.command, status="ok"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
