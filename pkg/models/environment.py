"""
Cube-map environment of direct radiance with a prefiltered mip chain
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from config import Config

FACE_NAMES = ("px", "nx", "py", "ny", "pz", "nz")
PREFILTER_SIGMA = 1.0


def prefilter_level(faces: np.ndarray) -> np.ndarray:
    """Next mip level: per-face Gaussian blur (sigma 1 texel, clamp-to-edge) then decimation by 2"""
    blurred = ndimage.gaussian_filter(
        faces, sigma=(0.0, PREFILTER_SIGMA, PREFILTER_SIGMA, 0.0), mode="nearest", truncate=3.0
    )
    return np.ascontiguousarray(blurred[:, ::2, ::2, :])


@dataclass
class EnvironmentMap:
    """Six square linear-RGB faces (+x,-x,+y,-y,+z,-z) of edge E plus P mip levels"""
    faces: np.ndarray                      # (6,E,E,3) level 0
    levels: int = 5
    mips: List[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.faces = np.asarray(self.faces, dtype=np.float64)
        if not self.mips:
            self.mips = self.build_mips()

    @classmethod
    def constant(cls, value, edge: int = Config.ENV_EDGE, levels: int = Config.ENV_LEVELS) -> "EnvironmentMap":
        faces = np.empty((6, edge, edge, 3), dtype=np.float64)
        faces[...] = np.asarray(value, dtype=np.float64).reshape(-1)[:3] if np.ndim(value) else value
        return cls(faces=faces, levels=levels)

    @property
    def edge(self) -> int:
        return int(self.faces.shape[1])

    def build_mips(self) -> List[np.ndarray]:
        chain = [self.faces]
        for _ in range(1, self.levels):
            chain.append(prefilter_level(chain[-1]))
        return chain

    def violations(self) -> List[str]:
        out = []
        if self.faces.ndim != 4 or self.faces.shape[0] != 6 or self.faces.shape[1] != self.faces.shape[2] \
                or self.faces.shape[3] != 3:
            return [f"environment faces have shape {self.faces.shape}, expected (6,E,E,3)"]
        if not np.isfinite(self.faces).all():
            out.append("environment radiance not finite")
        elif (self.faces < 0).any():
            out.append("environment radiance negative")
        if self.edge % (2 ** (self.levels - 1)) != 0:
            out.append(f"environment edge {self.edge} not divisible by 2^{self.levels - 1}")
        return out


def direction_to_face(dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Map unit directions to (face index, u, v) with u, v in [0,1]

    Face conventions follow the usual cube-map layout: u runs along sc, v along
    tc of the major axis.
    """
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    face = np.where(
        (ax >= ay) & (ax >= az), np.where(x >= 0, 0, 1),
        np.where(ay >= az, np.where(y >= 0, 2, 3), np.where(z >= 0, 4, 5)),
    )
    sc = np.select([face == 0, face == 1, face == 2, face == 3, face == 4], [-z, z, x, x, x], -x)
    tc = np.select([face == 0, face == 1, face == 2, face == 3, face == 4], [-y, -y, z, -z, -y], -y)
    ma = np.select([face <= 1, face <= 3], [ax, ay], az)
    ma = np.maximum(ma, 1e-30)
    u = 0.5 * (sc / ma + 1.0)
    v = 0.5 * (tc / ma + 1.0)
    return face, u, v


def texel_directions(edge: int) -> np.ndarray:
    """(6,E,E,3) unit directions through every texel center"""
    t = (np.arange(edge, dtype=np.float64) + 0.5) / edge * 2.0 - 1.0
    tc, sc = np.meshgrid(t, t, indexing="ij")
    one = np.ones_like(sc)
    faces = np.stack([
        np.stack([one, -tc, -sc], axis=-1),
        np.stack([-one, -tc, sc], axis=-1),
        np.stack([sc, one, tc], axis=-1),
        np.stack([sc, -one, -tc], axis=-1),
        np.stack([sc, -tc, one], axis=-1),
        np.stack([-sc, -tc, -one], axis=-1),
    ])
    return faces / np.linalg.norm(faces, axis=-1, keepdims=True)
