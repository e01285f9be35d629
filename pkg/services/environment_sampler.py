"""
Cube-map lookups with bilinear filtering inside a face and linear blending across mip levels
"""
from typing import Tuple, Union

import numpy as np

from models.environment import EnvironmentMap, direction_to_face


def _sample_level(faces: np.ndarray, face: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    edge = faces.shape[1]
    s = np.clip(u * edge - 0.5, 0.0, edge - 1)
    t = np.clip(v * edge - 0.5, 0.0, edge - 1)
    s0 = np.floor(s).astype(np.int64)
    t0 = np.floor(t).astype(np.int64)
    s1 = np.minimum(s0 + 1, edge - 1)
    t1 = np.minimum(t0 + 1, edge - 1)
    fs = (s - s0)[..., None]
    ft = (t - t0)[..., None]
    top = faces[face, t0, s0] * (1.0 - fs) + faces[face, t0, s1] * fs
    bottom = faces[face, t1, s0] * (1.0 - fs) + faces[face, t1, s1] * fs
    return top * (1.0 - ft) + bottom * ft


def level_weights(env: EnvironmentMap, level) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower mip index, upper mip index and blend fraction for a continuous level"""
    top = env.levels - 1
    lvl = np.clip(np.asarray(level, dtype=np.float64), 0.0, top)
    lo = np.minimum(np.floor(lvl).astype(np.int64), max(top - 1, 0))
    hi = np.minimum(lo + 1, top)
    frac = np.where(hi > lo, lvl - lo, 0.0)
    return lo, hi, frac


def sample_env(env: EnvironmentMap, dirs, level: Union[float, np.ndarray] = 0.0,
               with_slope: bool = False):
    """
    Radiance toward unit directions at a continuous mip level

    Args:
        env: environment map with its prefiltered chain
        dirs: (...,3) unit directions
        level: scalar or (...) array in [0, levels-1]
        with_slope: also return d(radiance)/d(level)

    Returns:
        (...,3) radiance, and the level slope when requested
    """
    d = np.asarray(dirs, dtype=np.float64)
    face, u, v = direction_to_face(d)
    lo, hi, frac = level_weights(env, np.broadcast_to(level, d.shape[:-1]))

    out = np.zeros(d.shape)
    slope = np.zeros(d.shape)
    for p in np.unique(np.concatenate([np.ravel(lo), np.ravel(hi)])):
        use_lo = lo == p
        use_hi = (hi == p) & (hi != lo)
        use = use_lo | use_hi
        if not use.any():
            continue
        val = np.zeros(d.shape)
        val[use] = _sample_level(env.mips[p], face[use], u[use], v[use])
        wt = np.where(use_lo, 1.0 - frac, 0.0) + np.where(use_hi, frac, 0.0)
        out += wt[..., None] * val
        sign = np.where(use_hi, 1.0, 0.0) - np.where(use_lo & (hi != lo), 1.0, 0.0)
        slope += sign[..., None] * val
    if with_slope:
        return out, slope
    return out
