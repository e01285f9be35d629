"""
Deferred shading: ideal specular reflection from the environment and traced
indirect light, and the region-blended final color
"""
from typing import Optional

import numpy as np

from config import Config
from models.buffers import GBuffer, SpecularBuffers
from models.environment import EnvironmentMap
from models.errors import ShapeMismatchError
from models.scene import Camera, Scene
from models.schemas import ShadingOpts
from utils.logger import setup_logger

from .environment_sampler import sample_env
from .tracer import Bvh, trace_batch

logger = setup_logger("shading")


def reflect_dir(w_o: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror w_o (camera toward surface) about n: w_o - 2 (w_o . n) n"""
    w_o = np.asarray(w_o, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return w_o - 2.0 * np.sum(w_o * n, axis=-1, keepdims=True) * n


def fresnel_schlick(f0: np.ndarray, cos_theta) -> np.ndarray:
    """F = f0 + (1 - f0)(1 - cos)^5 with cos clamped to [0,1]"""
    c = np.clip(np.asarray(cos_theta, dtype=np.float64), 0.0, 1.0)
    k = ((1.0 - c) ** 5)[..., None]
    f0 = np.asarray(f0, dtype=np.float64)
    return f0 + (1.0 - f0) * k


def glossy_pixels(gb: GBuffer, opts: Optional[ShadingOpts] = None) -> np.ndarray:
    opts = opts or ShadingOpts()
    return (gb.region < opts.m_thresh) & (gb.alpha >= Config.EMPTY_ALPHA)


def shade_ideal_specular(gb: GBuffer, env: EnvironmentMap, bvh: Bvh, scene: Scene, cam: Camera,
                         opts: Optional[ShadingOpts] = None) -> SpecularBuffers:
    """Per glossy pixel: F, traced L_ind / V / E_i along the mirror direction, and prefiltered L_dir"""
    opts = opts or ShadingOpts()
    height, width = cam.shape
    if gb.shape != (height, width):
        raise ShapeMismatchError(f"G-buffer {gb.shape} does not match camera {(height, width)}")

    w_o = cam.pixel_directions()
    candidates = glossy_pixels(gb, opts)
    normal_len = np.linalg.norm(gb.normal, axis=-1)
    degenerate = candidates & (normal_len < 0.5)
    traced = candidates & ~degenerate
    cos_raw = -np.sum(w_o * gb.normal, axis=-1)
    back_facing = traced & (cos_raw <= 0.0)

    fresnel = np.zeros((height, width, 3))
    indirect = np.zeros((height, width, 3))
    direct = np.zeros((height, width, 3))
    visibility = np.zeros((height, width))
    label = np.zeros((height, width))
    reflect = np.zeros((height, width, 3))

    if traced.any():
        n = gb.normal[traced]
        wo = w_o[traced]
        wr = reflect_dir(wo, n)
        wr /= np.linalg.norm(wr, axis=-1, keepdims=True)
        ys, xs = np.nonzero(traced)
        x = cam.unproject(xs.astype(np.float64), ys.astype(np.float64), gb.depth[traced])
        origins = x + bvh.opts.t_eps * wr
        radiance, vis, lab = trace_batch(bvh, scene, origins, wr)

        reflect[traced] = wr
        fresnel[traced] = fresnel_schlick(gb.fresnel[traced], cos_raw[traced])
        indirect[traced] = radiance
        visibility[traced] = vis
        label[traced] = lab
        direct[traced] = sample_env(env, wr, gb.roughness[traced] * (env.levels - 1))

    diagnostics = {
        "glossy_pixels": int(candidates.sum()),
        "traced_pixels": int(traced.sum()),
        "degenerate_normal": int(degenerate.sum()),
        "back_facing": int(back_facing.sum()),
    }
    if diagnostics["degenerate_normal"]:
        logger.warning(f"degenerate normals zeroed pixels={diagnostics['degenerate_normal']}")
    return SpecularBuffers(
        fresnel=fresnel, indirect=indirect, direct=direct, visibility=visibility, label=label,
        traced=traced, reflect_dirs=reflect, diagnostics=diagnostics,
    )


def compose_color(gb: GBuffer, diffuse: np.ndarray, glossy: np.ndarray) -> np.ndarray:
    """C = D + (1 - M) G"""
    if diffuse.shape != glossy.shape or diffuse.shape[:2] != gb.shape:
        raise ShapeMismatchError("diffuse, glossy and G-buffer dimensions differ")
    return diffuse + (1.0 - gb.region)[..., None] * glossy
