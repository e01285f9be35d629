"""
Scene data model: Gaussian primitives, cameras and per-view references
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.geometry import covariance, sh_degree_from_count, sh_rest_count

# Attribute schema in on-disk order: (name, components). sh_rest is appended
# with 3*rest components when the scene carries higher SH bands.
ATTRIBUTE_SCHEMA: Tuple[Tuple[str, int], ...] = (
    ("position", 3),
    ("scale", 3),
    ("rotation", 4),
    ("opacity", 1),
    ("color", 3),
    ("diffuse", 3),
    ("fresnel0", 3),
    ("roughness", 1),
    ("label", 1),
    ("region", 1),
    ("normal", 3),
)

# Attributes optimized during refinement; geometry stays frozen
MATERIAL_ATTRIBUTES = ("diffuse", "fresnel0", "roughness", "color", "sh_rest", "label", "region")


@dataclass(frozen=True)
class GaussianPrimitive:
    """One anisotropic 3D Gaussian with appearance and material attributes"""
    position: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    color: np.ndarray
    diffuse: np.ndarray
    fresnel0: np.ndarray
    roughness: float
    label: float
    region: float
    normal: np.ndarray
    sh_rest: Optional[np.ndarray] = None

    def covariance(self) -> np.ndarray:
        return covariance(self.scale[None], self.rotation[None])[0]


@dataclass
class GaussianCloud:
    """Struct-of-arrays storage for N primitives"""
    position: np.ndarray   # (N,3)
    scale: np.ndarray      # (N,3)
    rotation: np.ndarray   # (N,4) w,x,y,z
    opacity: np.ndarray    # (N,)
    color: np.ndarray      # (N,3)
    diffuse: np.ndarray    # (N,3)
    fresnel0: np.ndarray   # (N,3)
    roughness: np.ndarray  # (N,)
    label: np.ndarray      # (N,)
    region: np.ndarray     # (N,)
    normal: np.ndarray     # (N,3)
    sh_rest: np.ndarray    # (N,K,3), K = 0 for degree 0

    @property
    def count(self) -> int:
        return int(self.position.shape[0])

    def __len__(self) -> int:
        return self.count

    @property
    def sh_degree(self) -> int:
        return sh_degree_from_count(self.sh_rest.shape[1])

    @classmethod
    def empty(cls, sh_degree: int = 0, dtype=np.float32) -> "GaussianCloud":
        return cls(
            position=np.zeros((0, 3), dtype), scale=np.zeros((0, 3), dtype),
            rotation=np.zeros((0, 4), dtype), opacity=np.zeros((0,), dtype),
            color=np.zeros((0, 3), dtype), diffuse=np.zeros((0, 3), dtype),
            fresnel0=np.zeros((0, 3), dtype), roughness=np.zeros((0,), dtype),
            label=np.zeros((0,), dtype), region=np.zeros((0,), dtype),
            normal=np.zeros((0, 3), dtype),
            sh_rest=np.zeros((0, sh_rest_count(sh_degree), 3), dtype),
        )

    @classmethod
    def from_primitives(cls, prims: Sequence[GaussianPrimitive], sh_degree: int = 0,
                        dtype=np.float32) -> "GaussianCloud":
        if not prims:
            return cls.empty(sh_degree, dtype)
        rest = sh_rest_count(sh_degree)

        def stack(name):
            return np.asarray([np.asarray(getattr(p, name), dtype=np.float64) for p in prims], dtype=dtype)

        sh = np.zeros((len(prims), rest, 3), dtype)
        for i, p in enumerate(prims):
            if p.sh_rest is not None and rest:
                sh[i] = np.asarray(p.sh_rest, dtype=np.float64).reshape(rest, 3)
        return cls(
            position=stack("position"), scale=stack("scale"), rotation=stack("rotation"),
            opacity=stack("opacity"), color=stack("color"), diffuse=stack("diffuse"),
            fresnel0=stack("fresnel0"), roughness=stack("roughness"), label=stack("label"),
            region=stack("region"), normal=stack("normal"), sh_rest=sh,
        )

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            position=self.position[i].copy(), scale=self.scale[i].copy(),
            rotation=self.rotation[i].copy(), opacity=float(self.opacity[i]),
            color=self.color[i].copy(), diffuse=self.diffuse[i].copy(),
            fresnel0=self.fresnel0[i].copy(), roughness=float(self.roughness[i]),
            label=float(self.label[i]), region=float(self.region[i]),
            normal=self.normal[i].copy(),
            sh_rest=self.sh_rest[i].copy() if self.sh_rest.shape[1] else None,
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def subset(self, keep: np.ndarray) -> "GaussianCloud":
        return GaussianCloud(**{k: v[keep].copy() for k, v in self.arrays().items()})

    def concat(self, other: "GaussianCloud") -> "GaussianCloud":
        if other.sh_rest.shape[1] != self.sh_rest.shape[1]:
            raise ValueError("cannot concatenate clouds with different SH degrees")
        mine = self.arrays()
        theirs = other.arrays()
        return GaussianCloud(**{
            k: np.concatenate([mine[k], theirs[k].astype(mine[k].dtype)], axis=0) for k in mine
        })

    def astype(self, dtype) -> "GaussianCloud":
        return GaussianCloud(**{k: v.astype(dtype, copy=True) for k, v in self.arrays().items()})

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(**{k: v.copy() for k, v in self.arrays().items()})

    def covariances(self) -> np.ndarray:
        return covariance(self.scale, self.rotation)


@dataclass
class Camera:
    """Pinhole camera; world-to-camera x_c = R x_w + t, camera looks along +z, y down"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray     # (3,3)
    translation: np.ndarray  # (3,)
    near: float = 0.01
    far: float = 100.0

    @classmethod
    def look_at(cls, eye, target, width: int, height: int, fov_deg: float,
                up=(0.0, 0.0, 1.0), near: float = 0.01, far: float = 100.0) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        focal = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
        return cls(
            fx=float(focal), fy=float(focal), cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
            width=int(width), height=int(height), rotation=rot, translation=-rot @ eye,
            near=near, far=far,
        )

    @property
    def center(self) -> np.ndarray:
        return -np.asarray(self.rotation, dtype=np.float64).T @ np.asarray(self.translation, dtype=np.float64)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ np.asarray(self.rotation, dtype=np.float64).T \
            + np.asarray(self.translation, dtype=np.float64)

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """World points to pixel coordinates (pixel centers at integers) and camera depth"""
        pc = self.world_to_camera(points)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[..., 0] / z + self.cx
            v = self.fy * pc[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1), z

    def unproject(self, u, v, depth) -> np.ndarray:
        """Pixel coordinates plus camera-space depth back to world points"""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        z = np.asarray(depth, dtype=np.float64)
        pc = np.stack([(u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z], axis=-1)
        rot = np.asarray(self.rotation, dtype=np.float64)
        return (pc - np.asarray(self.translation, dtype=np.float64)) @ rot

    def pixel_directions(self) -> np.ndarray:
        """(H,W,3) unit world-space view directions through pixel centers"""
        vv, uu = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        pc = np.stack([(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)], axis=-1)
        d = pc @ np.asarray(self.rotation, dtype=np.float64)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def ndc_depth(self, z: np.ndarray) -> np.ndarray:
        """Camera depth to [0,1] normalized device depth"""
        return (self.far * (z - self.near)) / (z * (self.far - self.near))

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy), "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
            "rotation": np.asarray(self.rotation, dtype=np.float64).tolist(),
            "translation": np.asarray(self.translation, dtype=np.float64).tolist(),
            "near": float(self.near), "far": float(self.far),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Camera":
        return cls(
            fx=float(data["fx"]), fy=float(data["fy"]), cx=float(data["cx"]), cy=float(data["cy"]),
            width=int(data["width"]), height=int(data["height"]),
            rotation=np.asarray(data["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(data["translation"], dtype=np.float64).reshape(3),
            near=float(data["near"]), far=float(data["far"]),
        )


@dataclass
class ViewReference:
    """Supplied per-view inputs; any member may be absent"""
    rgb: Optional[np.ndarray] = None          # (H,W,3) in [0,1]
    object_mask: Optional[np.ndarray] = None  # (H,W) bool
    region_mask: Optional[np.ndarray] = None  # (H,W) bool, True = rough
    normal: Optional[np.ndarray] = None       # (H,W,3)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class Scene:
    gaussians: GaussianCloud
    env: "EnvironmentMap"
    cameras: List[Camera] = field(default_factory=list)
    references: Dict[int, ViewReference] = field(default_factory=dict)

    def with_gaussians(self, gaussians: GaussianCloud) -> "Scene":
        return replace(self, gaussians=gaussians)


def validate_scene(scene: Scene) -> List[str]:
    """Return every invariant violation; empty iff the scene is well formed"""
    violations: List[str] = []
    g = scene.gaussians
    n = g.count

    for name, comps in ATTRIBUTE_SCHEMA:
        arr = getattr(g, name)
        expected = (n,) if comps == 1 else (n, comps)
        if arr.shape != expected:
            violations.append(f"{name} has shape {arr.shape}, expected {expected}")
    if g.sh_rest.ndim != 3 or g.sh_rest.shape[0] != n or g.sh_rest.shape[2] != 3:
        violations.append(f"sh_rest has shape {g.sh_rest.shape}, expected ({n}, K, 3)")
    if violations:
        return violations

    for name, arr in g.arrays().items():
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argwhere(bad.reshape(n, -1).any(axis=1))[0][0]) if n else 0
            violations.append(f"{name} not finite (primitive {idx})")
    if violations:
        return violations

    def report(mask: np.ndarray, message: str):
        if mask.any():
            idx = np.flatnonzero(mask)
            violations.append(f"{message} (primitive {int(idx[0])}, {idx.size} total)")

    report((g.scale <= 0).any(axis=1), "scale not positive")
    report(np.abs(np.linalg.norm(g.rotation.astype(np.float64), axis=1) - 1.0) > 1e-6, "rotation not unit")
    report((g.opacity <= 0) | (g.opacity >= 1), "opacity outside (0,1)")
    report((g.color < 0).any(axis=1), "color negative")
    for name in ("diffuse", "fresnel0"):
        arr = getattr(g, name)
        report(((arr < 0) | (arr > 1)).any(axis=1), f"{name} outside [0,1]")
    for name in ("roughness", "label", "region"):
        arr = getattr(g, name)
        report((arr < 0) | (arr > 1), f"{name} outside [0,1]")
    report(np.abs(np.linalg.norm(g.normal.astype(np.float64), axis=1) - 1.0) > 1e-4, "normal not unit")

    if n and not (g.scale <= 0).any():
        eig = np.linalg.eigvalsh(g.covariances())
        report(eig[:, 0] <= 0, "covariance not positive definite")

    violations.extend(scene.env.violations())

    for ci, cam in enumerate(scene.cameras):
        if cam.fx <= 0 or cam.fy <= 0:
            violations.append(f"camera {ci}: focal length not positive")
        if not 0 < cam.near < cam.far:
            violations.append(f"camera {ci}: near/far invalid")
        if cam.width < 1 or cam.height < 1:
            violations.append(f"camera {ci}: empty image")
        rot = np.asarray(cam.rotation, dtype=np.float64)
        if rot.shape != (3, 3) or np.abs(rot @ rot.T - np.eye(3)).max() > 1e-6:
            violations.append(f"camera {ci}: rotation not orthonormal")

    for view_id, ref in scene.references.items():
        if view_id < 0 or view_id >= len(scene.cameras):
            violations.append(f"view {view_id}: no matching camera")
            continue
        shape = scene.cameras[view_id].shape
        for name, arr in ref.arrays().items():
            if arr.shape[:2] != shape:
                violations.append(f"view {view_id}: {name} has shape {arr.shape[:2]}, expected {shape}")
    return violations
