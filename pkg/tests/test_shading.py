import numpy as np
import pytest

from conftest import mirror_footprint, tolerant_overlap
from models.buffers import GBuffer, SpecularBuffers
from models.environment import EnvironmentMap
from models.scene import Camera, GaussianCloud, Scene
from models.schemas import EnvSpec, SceneSpec
from services.environment_sampler import sample_env
from services.scene_generator import make_environment, plane_cloud
from services.shading import compose_color, fresnel_schlick, reflect_dir, shade_ideal_specular
from services.rasterizer import rasterize_gbuffer
from services.renderer import Renderer
from services.tracer import build_bvh


@pytest.mark.parametrize("w_o, n, expected", [
    ((0.0, 0.0, -1.0), (0.0, 0.0, 1.0), (0.0, 0.0, 1.0)),
    ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
    ((np.sqrt(0.5), 0.0, -np.sqrt(0.5)), (0.0, 0.0, 1.0), (np.sqrt(0.5), 0.0, np.sqrt(0.5))),
])
def test_reflect_dir(w_o, n, expected):
    np.testing.assert_allclose(reflect_dir(np.array(w_o), np.array(n)), expected, atol=1e-15)


@pytest.mark.parametrize("f0, cos, expected", [
    (0.04, 1.0, 0.04),
    (0.04, 0.0, 1.0),
    (0.04, 0.5, 0.04 + 0.96 / 32.0),
    (0.9, -0.3, 1.0),
])
def test_fresnel_schlick(f0, cos, expected):
    out = fresnel_schlick(np.full(3, f0), np.array(cos))
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_constant_environment_is_direction_and_level_independent(rng):
    env = EnvironmentMap.constant((0.3, 0.6, 0.9), edge=16, levels=5)
    dirs = rng.normal(size=(200, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    levels = rng.uniform(0.0, 4.0, 200)
    np.testing.assert_allclose(sample_env(env, dirs, levels), np.tile([0.3, 0.6, 0.9], (200, 1)), rtol=1e-12)


def test_face_center_lookup():
    faces = np.zeros((6, 16, 16, 3))
    faces[4] = (0.2, 0.4, 0.6)
    env = EnvironmentMap(faces=faces, levels=5)
    np.testing.assert_allclose(sample_env(env, np.array([0.0, 0.0, 1.0]), 0.0), [0.2, 0.4, 0.6])


def test_top_level_of_checker_is_face_average():
    env = make_environment(EnvSpec(kind="checker", edge=64, checks=16, levels=5,
                                   value=(1.0, 1.0, 1.0), ground=(0.0, 0.0, 0.0)))
    out = sample_env(env, np.array([0.0, 0.0, 1.0]), 4.0)
    np.testing.assert_allclose(out, 0.5, rtol=0.02)


def test_level_slope_matches_difference():
    env = make_environment(EnvSpec(kind="gradient", edge=32, levels=5))
    d = np.array([[0.3, -0.4, 0.866]])
    d /= np.linalg.norm(d)
    _, slope = sample_env(env, d, 1.3, with_slope=True)
    h = 1e-4
    fd = (sample_env(env, d, 1.3 + h) - sample_env(env, d, 1.3 - h)) / (2 * h)
    np.testing.assert_allclose(slope, fd, atol=1e-8)


def mirror_plane_scene(env):
    spec = SceneSpec(plane_roughness=0.01, plane_fresnel=1.0, plane_extent=1.0, plane_spacing=0.05)
    cloud = plane_cloud(spec)
    cloud.roughness[:] = 0.0
    cam = Camera.look_at((0.0, -1.0, 1.2), (0.0, 0.0, 0.0), 32, 32, 40.0)
    return Scene(gaussians=cloud.astype(np.float64), env=env, cameras=[cam]), cam


def test_mirror_plane_under_constant_environment():
    scene, cam = mirror_plane_scene(EnvironmentMap.constant(1.0, edge=16, levels=5))
    gb = rasterize_gbuffer(scene, cam)
    spec = shade_ideal_specular(gb, scene.env, build_bvh(scene), scene, cam)
    assert spec.traced.sum() > 0.5 * cam.width * cam.height
    np.testing.assert_allclose(spec.direct[spec.traced], 1.0)
    np.testing.assert_allclose(spec.visibility[spec.traced], 1.0)
    np.testing.assert_allclose(spec.ideal()[spec.traced], spec.fresnel[spec.traced], rtol=1e-12)
    assert spec.diagnostics["back_facing"] == 0


def test_back_facing_normals_get_full_fresnel():
    cam = Camera(fx=16.0, fy=16.0, cx=3.5, cy=3.5, width=8, height=8, rotation=np.eye(3), translation=np.zeros(3))
    gb = GBuffer.zeros(8, 8)
    gb.alpha[:] = 1.0
    gb.depth[:] = 1.0
    gb.fresnel[:] = 0.04
    gb.normal[:] = cam.pixel_directions()
    env = EnvironmentMap.constant(0.5, edge=16, levels=5)
    scene = Scene(gaussians=GaussianCloud.empty(dtype=np.float64), env=env, cameras=[cam])
    spec = shade_ideal_specular(gb, env, build_bvh(scene), scene, cam)
    assert spec.diagnostics["back_facing"] == 64
    np.testing.assert_allclose(spec.fresnel, 1.0)


def test_degenerate_normals_are_not_traced():
    cam = Camera(fx=16.0, fy=16.0, cx=3.5, cy=3.5, width=8, height=8, rotation=np.eye(3), translation=np.zeros(3))
    gb = GBuffer.zeros(8, 8)
    gb.alpha[:] = 1.0
    gb.depth[:] = 1.0
    env = EnvironmentMap.constant(0.5, edge=16, levels=5)
    scene = Scene(gaussians=GaussianCloud.empty(dtype=np.float64), env=env, cameras=[cam])
    spec = shade_ideal_specular(gb, env, build_bvh(scene), scene, cam)
    assert spec.diagnostics["degenerate_normal"] == 64
    assert not spec.traced.any()
    assert not spec.ideal().any()


@pytest.mark.parametrize("region, expected", [(0.5, 0.4), (1.0, 0.2), (0.0, 0.6)])
def test_compose_color(region, expected):
    gb = GBuffer.zeros(2, 2)
    gb.region[:] = region
    out = compose_color(gb, np.full((2, 2, 3), 0.2), np.full((2, 2, 3), 0.4))
    np.testing.assert_allclose(out, expected)


def test_specular_ideal_is_fresnel_weighted_sum():
    rng = np.random.default_rng(5)
    shape = (4, 5)
    spec = SpecularBuffers(
        fresnel=rng.random(shape + (3,)), indirect=rng.random(shape + (3,)), direct=rng.random(shape + (3,)),
        visibility=rng.random(shape), label=np.zeros(shape), traced=np.ones(shape, dtype=bool),
        reflect_dirs=np.zeros(shape + (3,)), diagnostics={},
    )
    expected = spec.fresnel * (spec.indirect + spec.direct * spec.visibility[..., None])
    np.testing.assert_allclose(spec.ideal(), expected)


def test_mirror_sphere_visibility_footprint(mirror_sphere):
    scene = mirror_sphere.scene
    renderer = Renderer(scene.env)
    for cam in scene.cameras:
        spec = renderer.render(scene, cam).specular
        occluded = spec.traced & (spec.visibility < 0.99)
        expected, clear = mirror_footprint(cam, (0.0, 0.0, 0.25), 0.25, 1.0)
        assert expected.any()
        assert tolerant_overlap(occluded & clear, expected & clear) >= 0.9
