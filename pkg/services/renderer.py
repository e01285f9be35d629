"""
Forward renderer: rasterize, trace, shade, filter, compose
"""
import json
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from models.buffers import GBuffer, ShadeBuffers, SpecularBuffers
from models.environment import EnvironmentMap
from models.scene import Camera, GaussianCloud, Scene
from models.schemas import FilterOpts, RasterOpts, ShadingOpts, TraceOpts
from utils.checksum import fnv1a64
from utils.logger import setup_logger

from .environment_sampler import sample_env
from .rasterizer import (FeatureContext, SplatWeights, assemble_gbuffer, composite,
                         primitive_features, splat_weights)
from .screen_filter import FilterState, RoughnessTranslator, filter_specular
from .shading import compose_color, shade_ideal_specular
from .tracer import Bvh, build_bvh, rough_only

logger = setup_logger("renderer")

GEOMETRY_ATTRIBUTES = ("position", "scale", "rotation", "opacity")


def scene_fingerprint(gaussians: GaussianCloud, cam: Camera, names=None) -> int:
    """FNV-1a over attribute bytes and camera parameters"""
    chunks = []
    for name in (gaussians.arrays().keys() if names is None else names):
        chunks.append(np.ascontiguousarray(getattr(gaussians, name), dtype=np.float64).tobytes())
    chunks.append(json.dumps(cam.to_dict(), sort_keys=True).encode("utf-8"))
    return fnv1a64(b"".join(chunks))


@dataclass
class RenderResult:
    """Forward buffers of one view, kept for the backward pass"""
    camera: Camera
    gbuffer: GBuffer
    weights: SplatWeights
    features: FeatureContext
    bvh: Bvh
    specular: SpecularBuffers
    filtered: FilterState
    shade: ShadeBuffers
    fresnel_k: np.ndarray        # (H,W) (1 - cos)^5 at traced pixels
    direct_slope: np.ndarray     # (H,W,3) d(L_dir)/d(roughness)
    ray_origins: np.ndarray      # (T,3) traced pixels in row-major order
    ray_dirs: np.ndarray
    translator: RoughnessTranslator
    fingerprint: int
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def color(self) -> np.ndarray:
        return self.shade.color

    @property
    def glossy(self) -> np.ndarray:
        return self.shade.glossy

    def material_maps(self) -> Dict[str, np.ndarray]:
        gb = self.gbuffer
        return {
            "color": self.shade.color, "diffuse": gb.diffuse, "fresnel": gb.fresnel,
            "roughness": gb.roughness, "normal": gb.normal, "region": gb.region, "depth": gb.depth,
        }


class Renderer:
    """Deferred renderer bound to one environment map and a set of options"""

    def __init__(self, env: EnvironmentMap, raster_opts: Optional[RasterOpts] = None,
                 trace_opts: Optional[TraceOpts] = None, shading_opts: Optional[ShadingOpts] = None,
                 filter_opts: Optional[FilterOpts] = None, translator: Optional[RoughnessTranslator] = None):
        self.env = env
        self.raster_opts = raster_opts or RasterOpts()
        self.trace_opts = trace_opts or TraceOpts()
        self.shading_opts = shading_opts or ShadingOpts()
        self.filter_opts = filter_opts or FilterOpts()
        self.translator = translator or RoughnessTranslator(self.filter_opts)
        self._weights: Dict[int, Tuple[int, SplatWeights]] = {}

    def weights_for(self, gaussians: GaussianCloud, cam: Camera) -> SplatWeights:
        """Blending weights, one cached entry per camera, replaced when geometry changes"""
        view = scene_fingerprint(gaussians, cam, ())
        key = scene_fingerprint(gaussians, cam, GEOMETRY_ATTRIBUTES)
        cached = self._weights.get(view)
        if cached is not None and cached[0] == key:
            return cached[1]
        weights = splat_weights(gaussians, cam, self.raster_opts)
        self._weights[view] = (key, weights)
        return weights

    def clear_cache(self):
        self._weights.clear()

    def rasterize(self, scene: Scene, cam: Camera) -> GBuffer:
        weights = self.weights_for(scene.gaussians, cam)
        feat, _ = primitive_features(scene.gaussians, cam, weights.footprints.depths)
        return assemble_gbuffer(composite(weights, feat), weights.alpha, self.raster_opts)

    def render(self, scene: Scene, cam: Camera, bvh: Optional[Bvh] = None) -> RenderResult:
        g = scene.gaussians
        timings = {}
        start = time.perf_counter()
        weights = self.weights_for(g, cam)
        feat, ctx = primitive_features(g, cam, weights.footprints.depths)
        gb = assemble_gbuffer(composite(weights, feat), weights.alpha, self.raster_opts)
        timings["raster"] = time.perf_counter() - start

        start = time.perf_counter()
        if bvh is None:
            bvh = build_bvh(scene, rough_only, self.trace_opts)
        spec = shade_ideal_specular(gb, self.env, bvh, scene, cam, self.shading_opts)

        height, width = cam.shape
        traced = spec.traced
        fresnel_k = np.zeros((height, width))
        direct_slope = np.zeros((height, width, 3))
        ray_dirs = spec.reflect_dirs[traced]
        ray_origins = np.zeros((0, 3))
        if traced.any():
            ys, xs = np.nonzero(traced)
            x = cam.unproject(xs.astype(np.float64), ys.astype(np.float64), gb.depth[traced])
            ray_origins = x + bvh.opts.t_eps * ray_dirs
            cos = np.clip(-np.sum(cam.pixel_directions()[traced] * gb.normal[traced], axis=-1), 0.0, 1.0)
            fresnel_k[traced] = (1.0 - cos) ** 5
            levels = self.env.levels - 1
            _, slope = sample_env(self.env, ray_dirs, gb.roughness[traced] * levels, with_slope=True)
            direct_slope[traced] = slope * levels
        timings["trace"] = time.perf_counter() - start

        start = time.perf_counter()
        fstate = filter_specular(spec, gb.roughness, gb.depth, self.translator, self.filter_opts)
        color = compose_color(gb, gb.shaded_diffuse, fstate.glossy)
        shade = ShadeBuffers(diffuse=gb.shaded_diffuse, glossy=fstate.glossy, color=color, specular=spec)
        timings["filter"] = time.perf_counter() - start
        return RenderResult(
            camera=cam, gbuffer=gb, weights=weights, features=ctx, bvh=bvh, specular=spec,
            filtered=fstate, shade=shade, fresnel_k=fresnel_k, direct_slope=direct_slope,
            ray_origins=ray_origins, ray_dirs=ray_dirs, translator=self.translator,
            fingerprint=scene_fingerprint(g, cam), timings=timings,
        )


def render(scene: Scene, cam: Camera, **opts) -> RenderResult:
    return Renderer(scene.env, **opts).render(scene, cam)
