import numpy as np
import pytest

from conftest import axis_camera, single_cloud
from models.errors import StaleCacheError
from models.scene import Scene
from services.gradients import check_material_gradients, relative_error, render_grad_materials
from services.renderer import Renderer
from services.scene_generator import gen_synthetic_scene, preset


def test_diffuse_map_gradient_is_the_blend_weight(constant_env):
    cam = axis_camera(16, 16)
    scene = Scene(gaussians=single_cloud((0.0, 0.0, 2.0), scale=0.15, opacity=0.6), env=constant_env,
                  cameras=[cam])
    result = Renderer(constant_env).render(scene, cam)
    grad_map = np.zeros((16, 16, 3))
    grad_map[8, 8] = 1.0 / 3.0
    grads = render_grad_materials(scene, cam, result, grad_maps={"diffuse": grad_map})
    weight = result.gbuffer.alpha[8, 8]
    np.testing.assert_allclose(grads["diffuse"][0], weight / 3.0, rtol=1e-12)
    assert not grads["roughness"].any()


def test_off_screen_primitive_gets_no_gradient(constant_env):
    cam = axis_camera(16, 16)
    visible = single_cloud((0.0, 0.0, 2.0), scale=0.15)
    hidden = single_cloud((0.0, 0.0, -3.0), scale=0.15)
    scene = Scene(gaussians=visible.concat(hidden), env=constant_env, cameras=[cam])
    result = Renderer(constant_env).render(scene, cam)
    grads = render_grad_materials(scene, cam, result, grad_color=np.ones((16, 16, 3)))
    for name, grad in grads.items():
        assert not grad[1].any(), name


def test_stale_cache_is_rejected(constant_env):
    cam = axis_camera(16, 16)
    scene = Scene(gaussians=single_cloud((0.0, 0.0, 2.0)), env=constant_env, cameras=[cam])
    result = Renderer(constant_env).render(scene, cam)
    edited = scene.gaussians.copy()
    edited.diffuse[0, 0] = 0.9
    with pytest.raises(StaleCacheError):
        render_grad_materials(scene.with_gaussians(edited), cam, result, grad_color=np.ones((16, 16, 3)))


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


def glossy_scene():
    spec = preset("mirror-sphere", width=32, height=32, camera_count=1, sh_degree=1, plane_extent=0.6,
                  plane_spacing=0.06, plane_roughness=0.1, with_references=False, seed=11)
    scene = gen_synthetic_scene(spec).scene
    rng = np.random.default_rng(11)
    cloud = scene.gaussians.astype(np.float64)
    n = cloud.count
    cloud.diffuse[:] = rng.uniform(0.1, 0.9, (n, 3))
    cloud.fresnel0[:] = rng.uniform(0.05, 0.95, (n, 3))
    cloud.roughness[:] = rng.uniform(0.02, 0.3, n)
    cloud.color[:] = rng.uniform(0.1, 0.9, (n, 3))
    cloud.label[:] = rng.uniform(0.0, 1.0, n)
    cloud.sh_rest[:] = rng.normal(0.0, 0.05, cloud.sh_rest.shape)
    return scene.with_gaussians(cloud)


@pytest.mark.slow
def test_material_gradients_match_central_differences():
    scene = glossy_scene()
    cam = scene.cameras[0]
    target = np.random.default_rng(3).random((32, 32, 3))

    def loss(result):
        diff = result.color - target
        return 0.5 * float(np.sum(diff * diff)), diff, None

    report = check_material_gradients(scene, cam, loss, Renderer(scene.env), samples=4)
    assert report.passed, report.failing
    assert sum(report.checked.values()) > 0
