"""
Screen-space buffers and per-ray results passed between pipeline stages
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

# Material maps carried by an inpainting task, in export order
TASK_CHANNELS = ("color", "diffuse", "fresnel", "roughness", "normal", "region", "depth")


@dataclass
class GBuffer:
    """Alpha-composited per-pixel attributes of one view"""
    normal: np.ndarray          # (H,W,3) unit or zero where empty
    diffuse: np.ndarray         # (H,W,3) d^agg
    fresnel: np.ndarray         # (H,W,3) f0^agg
    roughness: np.ndarray       # (H,W) r^agg
    depth: np.ndarray           # (H,W) alpha-weighted mean camera depth
    region: np.ndarray          # (H,W) M
    object_mask: np.ndarray     # (H,W) Omega
    alpha: np.ndarray           # (H,W) A
    shaded_diffuse: np.ndarray  # (H,W,3) D, region-blended diffuse radiance
    opts: Dict[str, object] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.alpha.shape

    def channels(self) -> Dict[str, np.ndarray]:
        return {
            "normal": self.normal, "diffuse": self.diffuse, "fresnel": self.fresnel,
            "roughness": self.roughness, "depth": self.depth, "region": self.region,
            "object_mask": self.object_mask, "alpha": self.alpha,
            "shaded_diffuse": self.shaded_diffuse,
        }

    @classmethod
    def zeros(cls, height: int, width: int, opts: Optional[dict] = None) -> "GBuffer":
        h, w = height, width
        return cls(
            normal=np.zeros((h, w, 3)), diffuse=np.zeros((h, w, 3)), fresnel=np.zeros((h, w, 3)),
            roughness=np.zeros((h, w)), depth=np.zeros((h, w)), region=np.zeros((h, w)),
            object_mask=np.zeros((h, w)), alpha=np.zeros((h, w)), shaded_diffuse=np.zeros((h, w, 3)),
            opts=dict(opts or {}),
        )


@dataclass(frozen=True)
class ScreenFootprint:
    """Projected 2D footprint of one primitive"""
    mean: np.ndarray       # (2,) pixel coordinates
    cov: np.ndarray        # (2,2)
    depth: float           # camera-space z
    bounds: Tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive pixel box of the cutoff ellipse

    @property
    def conic(self) -> np.ndarray:
        return np.linalg.inv(self.cov)


@dataclass(frozen=True)
class Hit:
    index: int
    t: float
    alpha: float


@dataclass
class TraceResult:
    """Composited result of one ray"""
    indirect: np.ndarray   # L_ind (3,)
    visibility: float      # V
    label: float           # E_i
    incident: np.ndarray   # L_i = L_ind + L_dir V (equals L_ind without an environment)


@dataclass
class SpecularBuffers:
    """Ideal-specular components per pixel (zero outside traced glossy pixels)"""
    fresnel: np.ndarray     # F (H,W,3)
    indirect: np.ndarray    # L_ind (H,W,3)
    direct: np.ndarray      # L_dir (H,W,3), roughness-prefiltered
    visibility: np.ndarray  # V (H,W)
    label: np.ndarray       # E_i (H,W)
    traced: np.ndarray      # (H,W) bool, pixels that received a ray
    reflect_dirs: np.ndarray  # (H,W,3)
    diagnostics: Dict[str, int] = field(default_factory=dict)

    def ideal(self) -> np.ndarray:
        """Unfiltered S = F (L_ind + L_dir V)"""
        return self.fresnel * (self.indirect + self.direct * self.visibility[..., None])


@dataclass
class ShadeBuffers:
    diffuse: np.ndarray      # D
    glossy: np.ndarray       # G
    color: np.ndarray        # C
    specular: SpecularBuffers

    def components(self) -> Dict[str, np.ndarray]:
        return {
            "C": self.color, "D": self.diffuse, "G": self.glossy, "F": self.specular.fresnel,
            "L_ind": self.specular.indirect, "L_dir": self.specular.direct,
            "V": self.specular.visibility,
        }


@dataclass
class ScreenPyramid:
    """Mip pyramid of a screen image; levels[0] is the input"""
    levels: List[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.levels)


@dataclass
class LightingMask:
    e_obj: np.ndarray       # (H,W) >= 0
    reflection: np.ndarray  # M_r (H,W) bool
    tau: float
    combined: np.ndarray    # M_r | Omega (H,W) bool


@dataclass
class InpaintTask:
    """Maps of one reference view and their inpainted counterparts"""
    view_id: int
    mask: np.ndarray                                     # P (H,W) bool
    maps: Dict[str, np.ndarray]
    inpainted: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def completed(self) -> bool:
        return all(name in self.inpainted for name in self.maps)
