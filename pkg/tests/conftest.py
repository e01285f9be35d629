import numpy as np
import pytest
from scipy import ndimage

from models.environment import EnvironmentMap
from models.scene import Camera, GaussianCloud, Scene
from services.scene_generator import gen_synthetic_scene, preset


def axis_camera(width: int = 64, height: int = 64, focal: float = None) -> Camera:
    """Camera at the origin looking down +z"""
    focal = float(width) if focal is None else focal
    return Camera(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height,
                  rotation=np.eye(3), translation=np.zeros(3), near=0.1, far=20.0)


def random_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_cloud(rng: np.random.Generator, n: int, region=None, dtype=np.float64) -> GaussianCloud:
    """n primitives inside the frustum of axis_camera, normals facing it"""
    z = rng.uniform(2.0, 4.0, n)
    xy = rng.uniform(-0.4, 0.4, (n, 2)) * z[:, None]
    normal = np.tile([0.0, 0.0, -1.0], (n, 1)) + rng.normal(0.0, 0.2, (n, 3))
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    if region is None:
        region = (rng.random(n) < 0.5).astype(np.float64)
    return GaussianCloud(
        position=np.column_stack([xy, z]).astype(dtype),
        scale=rng.uniform(0.02, 0.15, (n, 3)).astype(dtype),
        rotation=random_quats(rng, n).astype(dtype),
        opacity=rng.uniform(0.2, 0.95, n).astype(dtype),
        color=rng.uniform(0.0, 1.0, (n, 3)).astype(dtype),
        diffuse=rng.uniform(0.0, 1.0, (n, 3)).astype(dtype),
        fresnel0=rng.uniform(0.0, 1.0, (n, 3)).astype(dtype),
        roughness=rng.uniform(0.0, 1.0, n).astype(dtype),
        label=rng.uniform(0.0, 1.0, n).astype(dtype),
        region=np.broadcast_to(region, (n,)).astype(dtype),
        normal=normal.astype(dtype),
        sh_rest=np.zeros((n, 0, 3), dtype),
    )


def single_cloud(position, scale=0.1, opacity=0.8, color=(1.0, 0.0, 0.0), label=1.0, region=1.0,
                 diffuse=(0.5, 0.5, 0.5), fresnel0=(0.04, 0.04, 0.04), roughness=0.5,
                 normal=(0.0, 0.0, -1.0)) -> GaussianCloud:
    """One isotropic primitive"""
    one = lambda v: np.asarray([v], dtype=np.float64)
    return GaussianCloud(
        position=one(position), scale=np.full((1, 3), scale), rotation=one((1.0, 0.0, 0.0, 0.0)),
        opacity=one(opacity), color=one(color), diffuse=one(diffuse), fresnel0=one(fresnel0),
        roughness=one(roughness), label=one(label), region=one(region), normal=one(normal),
        sh_rest=np.zeros((1, 0, 3)),
    )


def tolerant_overlap(a: np.ndarray, b: np.ndarray, px: int = 1) -> float:
    """Share of each mask lying within px pixels of the other"""
    grow = np.ones((2 * px + 1, 2 * px + 1), dtype=bool)
    a_near = ndimage.binary_dilation(a, structure=grow)
    b_near = ndimage.binary_dilation(b, structure=grow)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return (int((a & b_near).sum()) + int((b & a_near).sum())) / total


def mirror_footprint(cam: Camera, center, radius: float, extent: float):
    """
    Plane pixels whose mirror ray about z = 0 hits the sphere, and the plane
    pixels at least one pixel away from the sphere silhouette
    """
    center = np.asarray(center, dtype=np.float64)
    o = cam.center
    d = cam.pixel_directions()

    def hits_sphere(origin, dirs):
        oc = origin - center
        b = np.sum(dirs * oc, axis=-1)
        c = np.sum(oc * oc, axis=-1) - radius ** 2
        disc = b * b - c
        return (disc >= 0.0) & (-b + np.sqrt(np.maximum(disc, 0.0)) > 0.0)

    down = d[..., 2] < 0.0
    t = np.where(down, -o[2] / np.where(down, d[..., 2], -1.0), 0.0)
    x = o + t[..., None] * d
    on_plane = down & (np.abs(x[..., 0]) <= extent) & (np.abs(x[..., 1]) <= extent)
    sphere = hits_sphere(o, d)
    mirrored = d * np.array([1.0, 1.0, -1.0])
    footprint = on_plane & ~sphere & hits_sphere(x, mirrored)
    clear = on_plane & ~ndimage.binary_dilation(sphere, structure=np.ones((3, 3), dtype=bool))
    return footprint, clear


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera():
    return axis_camera()


@pytest.fixture
def constant_env():
    return EnvironmentMap.constant(1.0, edge=16, levels=5)


@pytest.fixture
def cloud_factory():
    return random_cloud


@pytest.fixture
def scene_factory(constant_env):
    def make(cloud: GaussianCloud, cameras=None) -> Scene:
        return Scene(gaussians=cloud, env=constant_env, cameras=list(cameras or [axis_camera()]))
    return make


@pytest.fixture(scope="session")
def mirror_sphere():
    """Small mirror-sphere scene: glossy plane, one rough target sphere, four views"""
    return gen_synthetic_scene(preset("mirror-sphere", camera_count=4, seed=3))
