"""
Procedural scenes: a glossy plane with Gaussian-cluster objects, a
procedural environment, a camera ring and per-view references
"""
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from config import Config
from models.environment import EnvironmentMap, texel_directions
from models.scene import Camera, GaussianCloud, Scene, ViewReference
from models.schemas import EnvSpec, ObjectSpec, SceneSpec
from utils.geometry import quat_from_normal, sh_rest_count
from utils.logger import kv, setup_logger

from .renderer import Renderer

logger = setup_logger("generator")

SPLAT_SCALE = 0.6       # in-plane sigma relative to spacing
THICKNESS = 0.1         # normal-direction sigma relative to spacing
PLANE_OPACITY = 0.95
OBJECT_OPACITY = 0.95
OBJECT_FRESNEL = 0.04
OBJECT_ROUGHNESS = 0.8

PRESETS: Dict[str, SceneSpec] = {
    "mirror-sphere": SceneSpec(
        plane_roughness=0.01, plane_fresnel=0.9, plane_diffuse=0.05,
        objects=[ObjectSpec(kind="sphere", center=(0.0, 0.0, 0.25), size=0.25,
                            color=(0.8, 0.2, 0.1), target=True)],
        env=EnvSpec(kind="gradient"),
    ),
    "glossy-box": SceneSpec(
        plane_roughness=0.1, plane_fresnel=0.7, plane_diffuse=0.1,
        objects=[
            ObjectSpec(kind="box", center=(-0.2, 0.0, 0.2), size=0.2, color=(0.1, 0.3, 0.8), target=True),
            ObjectSpec(kind="sphere", center=(0.45, 0.35, 0.15), size=0.15, color=(0.2, 0.7, 0.2)),
        ],
        env=EnvSpec(kind="checker"),
    ),
}


@dataclass
class GeneratedScene:
    scene: Scene               # full scene with the target object and references
    ground_truth: Scene        # same scene without the target object
    target: np.ndarray         # (N,) bool, primitives of the target object


def _surfels(points: np.ndarray, normals: np.ndarray, spacing: float, opacity: float, color, diffuse,
             fresnel: float, roughness: float, region: float, label: float, sh_degree: int) -> GaussianCloud:
    n = points.shape[0]
    quats = np.stack([quat_from_normal(nrm) for nrm in normals]) if n else np.zeros((0, 4))
    scale = np.tile([SPLAT_SCALE * spacing, SPLAT_SCALE * spacing, THICKNESS * spacing], (n, 1))
    return GaussianCloud(
        position=points.astype(np.float32), scale=scale.astype(np.float32),
        rotation=quats.astype(np.float32), opacity=np.full(n, opacity, np.float32),
        color=np.tile(np.asarray(color, np.float32), (n, 1)),
        diffuse=np.tile(np.asarray(diffuse, np.float32), (n, 1)),
        fresnel0=np.full((n, 3), fresnel, np.float32), roughness=np.full(n, roughness, np.float32),
        label=np.full(n, label, np.float32), region=np.full(n, region, np.float32),
        normal=normals.astype(np.float32),
        sh_rest=np.zeros((n, sh_rest_count(sh_degree), 3), np.float32),
    )


def plane_cloud(spec: SceneSpec) -> GaussianCloud:
    """Square grid of flat Gaussians at z = 0, normal +z, glossy region"""
    ticks = np.arange(-spec.plane_extent, spec.plane_extent + 1e-9, spec.plane_spacing)
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    pts = np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)
    if spec.plane_jitter > 0.0:
        rng = np.random.default_rng(spec.seed)
        pts[:, :2] += rng.uniform(-spec.plane_jitter, spec.plane_jitter, (pts.shape[0], 2)) * spec.plane_spacing
    normals = np.tile([0.0, 0.0, 1.0], (pts.shape[0], 1))
    d = (spec.plane_diffuse,) * 3
    return _surfels(pts, normals, spec.plane_spacing, PLANE_OPACITY, d, d, spec.plane_fresnel,
                    spec.plane_roughness, region=0.0, label=0.0, sh_degree=spec.sh_degree)


def fibonacci_sphere(count: int) -> np.ndarray:
    k = np.arange(count, dtype=np.float64) + 0.5
    phi = np.arccos(1.0 - 2.0 * k / count)
    theta = np.pi * (1.0 + 5.0 ** 0.5) * k
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _box_shell(size: float, spacing: float):
    ticks = np.arange(-size, size + 1e-9, spacing)
    a, b = np.meshgrid(ticks, ticks, indexing="xy")
    a, b = a.ravel(), b.ravel()
    pts, nrm = [], []
    for axis in range(3):
        u, v = [i for i in range(3) if i != axis]
        for sign in (1.0, -1.0):
            p = np.zeros((a.size, 3))
            p[:, axis] = sign * size
            p[:, u] = a
            p[:, v] = b
            n = np.zeros((a.size, 3))
            n[:, axis] = sign
            pts.append(p)
            nrm.append(n)
    return np.concatenate(pts), np.concatenate(nrm)


def object_cloud(obj: ObjectSpec, sh_degree: int = 0) -> GaussianCloud:
    """Rough Gaussian shell of a sphere or box; target objects carry label 1"""
    if obj.kind == "sphere":
        count = max(int(np.ceil(4.0 * np.pi * obj.size ** 2 / obj.spacing ** 2)), 1)
        normals = fibonacci_sphere(count)
        pts = normals * obj.size
    else:
        pts, normals = _box_shell(obj.size, obj.spacing)
    pts = pts + np.asarray(obj.center)
    return _surfels(pts, normals, obj.spacing, OBJECT_OPACITY, obj.color, obj.color, OBJECT_FRESNEL,
                    OBJECT_ROUGHNESS, region=1.0, label=1.0 if obj.target else 0.0, sh_degree=sh_degree)


def make_environment(spec: EnvSpec) -> EnvironmentMap:
    value = np.asarray(spec.value)
    ground = np.asarray(spec.ground)
    if spec.kind == "constant":
        return EnvironmentMap.constant(value, spec.edge, spec.levels)
    if spec.kind == "gradient":
        t = 0.5 * (texel_directions(spec.edge)[..., 2:3] + 1.0)
        faces = ground * (1.0 - t) + value * t
    else:
        cell = max(spec.edge // spec.checks, 1)
        idx = np.arange(spec.edge) // cell
        parity = (idx[:, None] + idx[None, :]) % 2 == 0
        faces = np.where(parity[None, ..., None], value, ground) * np.ones((6, 1, 1, 1))
    return EnvironmentMap(faces=faces, levels=spec.levels)


def camera_ring(spec: SceneSpec) -> List[Camera]:
    cams = []
    for k in range(spec.camera_count):
        angle = 2.0 * np.pi * k / spec.camera_count
        eye = (spec.camera_radius * np.cos(angle), spec.camera_radius * np.sin(angle), spec.camera_height)
        cams.append(Camera.look_at(eye, spec.camera_target, spec.width, spec.height, spec.fov_deg,
                                   near=spec.near, far=spec.far))
    return cams


def render_references(scene: Scene, renderer: Renderer) -> Dict[int, ViewReference]:
    """rgb, object mask, region mask (rough) and normal of every camera"""
    refs = {}
    for i, cam in enumerate(scene.cameras):
        result = renderer.render(scene, cam)
        gb = result.gbuffer
        refs[i] = ViewReference(
            rgb=np.clip(result.color, 0.0, 1.0).astype(np.float32),
            object_mask=gb.object_mask >= 0.5,
            region_mask=(gb.region >= 0.5) & (gb.alpha >= Config.EMPTY_ALPHA),
            normal=gb.normal.astype(np.float32),
        )
    return refs


def gen_synthetic_scene(spec: SceneSpec) -> GeneratedScene:
    """Build the scene, its object-free twin and (optionally) both sets of references"""
    parts = [plane_cloud(spec)] + [object_cloud(obj, spec.sh_degree) for obj in spec.objects]
    target = np.concatenate([np.zeros(parts[0].count, dtype=bool)] +
                            [np.full(p.count, obj.target) for p, obj in zip(parts[1:], spec.objects)])
    cloud = parts[0]
    for p in parts[1:]:
        cloud = cloud.concat(p)

    env = make_environment(spec.env)
    cams = camera_ring(spec)
    scene = Scene(gaussians=cloud, env=env, cameras=cams)
    truth = Scene(gaussians=cloud.subset(~target), env=env, cameras=list(cams))
    if spec.with_references:
        renderer = Renderer(env)
        scene.references = render_references(scene, renderer)
        truth.references = render_references(truth, renderer)
    logger.info(kv(primitives=cloud.count, target=int(target.sum()), views=len(cams), env=spec.env.kind))
    return GeneratedScene(scene=scene, ground_truth=truth, target=target)


def preset(name: str, **overrides) -> SceneSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[name]
    return type(base).model_validate({**base.model_dump(), **overrides})
