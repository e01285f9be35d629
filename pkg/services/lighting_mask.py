"""
Object-related reflection map and the lighting-aware mask derived from it
"""
from typing import Optional

import numpy as np

from models.buffers import GBuffer, LightingMask, SpecularBuffers
from models.scene import Camera, Scene
from models.schemas import FilterOpts, ShadingOpts
from utils.logger import kv, setup_logger

from .screen_filter import RoughnessTranslator, filter_image
from .shading import shade_ideal_specular
from .tracer import Bvh

logger = setup_logger("lightmask")


def reflection_from_specular(spec: SpecularBuffers, gb: GBuffer,
                             translator: Optional[RoughnessTranslator] = None,
                             opts: Optional[FilterOpts] = None) -> np.ndarray:
    """E_obj from already traced specular buffers: filter(lum(F) E_i) (1 - M)"""
    opts = opts or FilterOpts()
    translator = translator or RoughnessTranslator(opts)
    source = spec.fresnel.mean(axis=-1) * spec.label
    rs = translator.forward(gb.roughness, gb.depth).rs
    filtered = filter_image(source, rs, opts.levels).value
    return np.maximum(filtered, 0.0) * (1.0 - gb.region)


def object_reflection_map(scene: Scene, cam: Camera, gb: GBuffer, bvh: Bvh,
                          translator: Optional[RoughnessTranslator] = None,
                          filter_opts: Optional[FilterOpts] = None,
                          shading_opts: Optional[ShadingOpts] = None) -> np.ndarray:
    """
    Fresnel-weighted label contribution of mirror rays, filtered like the glossy term

    Args:
        scene: scene whose labels mark the object
        cam: view camera
        gb: G-buffer of the view
        bvh: traceable primitives
        translator: roughness translation used by the glossy filter

    Returns:
        (H,W) E_obj >= 0, zero on rough and empty pixels
    """
    spec = shade_ideal_specular(gb, scene.env, bvh, scene, cam, shading_opts)
    return reflection_from_specular(spec, gb, translator, filter_opts)


def lighting_mask(e_obj: np.ndarray, tau: float, obj_mask: np.ndarray) -> LightingMask:
    """M_r = E_obj > tau, combined with the object mask"""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    e_obj = np.asarray(e_obj, dtype=np.float64)
    obj = np.asarray(obj_mask, dtype=bool)
    reflection = e_obj > tau
    mask = LightingMask(e_obj=e_obj, reflection=reflection, tau=float(tau), combined=reflection | obj)
    logger.debug(kv(tau=tau, reflection_pixels=int(reflection.sum()), combined_pixels=int(mask.combined.sum())))
    return mask
