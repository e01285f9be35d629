import numpy as np
import pytest

from conftest import axis_camera
from models.errors import EmptySelectionError, ShapeMismatchError
from services.losses import (loss_appearance, loss_color, loss_depth_distortion, loss_depth_normal, loss_l1,
                             loss_label_bce, loss_material, loss_smooth)
from services.rasterizer import DepthSamples


def test_l1_of_uniform_offset():
    assert loss_l1(np.full((4, 4, 3), 0.3), np.full((4, 4, 3), 0.2)) == pytest.approx(0.1)


def test_l1_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        loss_l1(np.zeros((4, 4)), np.zeros((4, 5)))


def test_color_loss_with_everything_masked():
    with pytest.raises(EmptySelectionError):
        loss_color(np.zeros((8, 8, 3)), np.ones((8, 8, 3)), mask=np.ones((8, 8), dtype=bool))


def test_color_loss_on_small_image_is_l1_only(rng):
    img = rng.random((8, 8, 3))
    gt = rng.random((8, 8, 3))
    mask = np.ones((8, 8), dtype=bool)
    mask[3, 4] = False
    expected = 0.8 * np.abs(img[3, 4] - gt[3, 4]).mean()
    assert loss_color(img, gt, mask) == pytest.approx(expected)


def test_color_loss_of_identical_images_is_zero(rng):
    img = rng.random((16, 16, 3))
    assert loss_color(img, img) == pytest.approx(0.0, abs=1e-12)


def test_color_loss_gradient_matches_difference(rng):
    img = rng.random((12, 12, 3))
    gt = rng.random((12, 12, 3))
    mask = np.zeros((12, 12), dtype=bool)
    mask[:3, :3] = True
    _, grad = loss_color(img, gt, mask, return_grad=True)
    h = 1e-6
    for idx in [(5, 5, 0), (6, 7, 2), (11, 0, 1), (1, 1, 0)]:
        up, down = img.copy(), img.copy()
        up[idx] += h
        down[idx] -= h
        fd = (loss_color(up, gt, mask) - loss_color(down, gt, mask)) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def material_maps(value=0.5, shape=(6, 6)):
    return {
        "diffuse": np.full(shape + (3,), value), "fresnel": np.full(shape + (3,), 0.04),
        "roughness": np.full(shape, 0.3), "normal": np.tile([0.0, 0.0, -1.0], shape + (1,)),
    }


def test_material_loss_of_equal_maps_is_zero():
    inpaint = np.ones((6, 6), dtype=bool)
    assert loss_material(material_maps(), material_maps(), np.zeros((6, 6)), inpaint) == 0.0


def test_material_loss_is_gated_by_region():
    inpaint = np.ones((6, 6), dtype=bool)
    assert loss_material(material_maps(0.1), material_maps(0.9), np.ones((6, 6)), inpaint) == 0.0


def test_material_loss_single_pixel():
    inpaint = np.zeros((6, 6), dtype=bool)
    inpaint[2, 3] = True
    rendered = material_maps(0.5)
    target = material_maps(0.5)
    target["diffuse"][2, 3] = 0.7
    value, grads = loss_material(rendered, target, np.zeros((6, 6)), inpaint, return_grad=True)
    assert value == pytest.approx(0.2)
    np.testing.assert_allclose(grads["diffuse"][2, 3], -1.0 / 3.0)
    assert not grads["diffuse"][~inpaint].any()


def test_appearance_loss_uniform_offset():
    inpaint = np.ones((5, 5), dtype=bool)
    value = loss_appearance(np.full((5, 5, 3), 0.6), np.full((5, 5, 3), 0.3), np.ones((5, 5)), inpaint)
    assert value == pytest.approx(0.3)
    assert loss_appearance(np.ones((5, 5, 3)), np.zeros((5, 5, 3)), np.ones((5, 5)),
                           np.zeros((5, 5), dtype=bool)) == 0.0


def test_smoothness_of_constant_map_is_zero(rng):
    value = loss_smooth({"roughness": np.full((8, 8), 0.4)}, rng.random((8, 8, 3)), np.ones((8, 8)))
    assert value == 0.0


def test_smoothness_of_step_on_flat_image():
    rough = np.zeros((8, 10))
    rough[:, 5:] = 0.3
    value = loss_smooth({"roughness": rough}, np.full((8, 10, 3), 0.5), np.ones((8, 10)))
    assert value == pytest.approx(0.3 / 10)


def test_smoothness_ignores_steps_on_image_edges():
    rough = np.zeros((8, 10))
    rough[:, 5:] = 0.3
    img = np.zeros((8, 10))
    img[:, 5:] = 20.0
    value = loss_smooth({"roughness": rough}, img, np.ones((8, 10)))
    assert value < 1e-9


def test_smoothness_gradient_matches_difference(rng):
    rough = rng.random((6, 7))
    img = rng.random((6, 7, 3))
    weight = rng.random((6, 7))
    _, grads = loss_smooth({"roughness": rough}, img, weight, return_grad=True)
    h = 1e-6
    for idx in [(0, 0), (3, 4), (5, 6)]:
        up, down = rough.copy(), rough.copy()
        up[idx] += h
        down[idx] -= h
        fd = (loss_smooth({"roughness": up}, img, weight) - loss_smooth({"roughness": down}, img, weight)) / (2 * h)
        assert grads["roughness"][idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


@pytest.mark.parametrize("pred, target, expected", [
    (0.5, 1.0, np.log(2.0)),
    (0.5, 0.0, np.log(2.0)),
    (0.9, 1.0, -np.log(0.9)),
])
def test_label_bce(pred, target, expected):
    assert loss_label_bce(np.full((3, 3), pred), np.full((3, 3), target)) == pytest.approx(expected)


def test_label_bce_is_finite_at_the_bounds():
    value = loss_label_bce(np.zeros((2, 2)), np.ones((2, 2)))
    assert np.isfinite(value)
    assert value == pytest.approx(-np.log(1e-6))


def test_depth_normal_loss_on_fronto_parallel_plane():
    cam = axis_camera(16, 16)
    normal = np.tile([0.0, 0.0, -1.0], (16, 16, 1))
    assert loss_depth_normal(normal, np.full((16, 16), 2.0), cam) == pytest.approx(0.0, abs=1e-12)
    sideways = np.tile([1.0, 0.0, 0.0], (16, 16, 1))
    assert loss_depth_normal(sideways, np.full((16, 16), 2.0), cam) == pytest.approx(1.0)


def test_depth_normal_loss_on_tilted_plane():
    # plane z = 2 + y seen from the origin
    cam = axis_camera(16, 16, focal=32.0)
    v = (np.arange(16, dtype=np.float64)[:, None] - cam.cy) / cam.fy
    depth = np.broadcast_to(2.0 / (1.0 - v), (16, 16)).copy()
    normal = np.tile(np.array([0.0, 1.0, -1.0]) / np.sqrt(2.0), (16, 16, 1))
    assert loss_depth_normal(normal, depth, cam) == pytest.approx(0.0, abs=1e-9)


def test_depth_normal_loss_skips_empty_neighbourhoods():
    cam = axis_camera(8, 8)
    alpha = np.zeros((8, 8))
    value = loss_depth_normal(np.zeros((8, 8, 3)), np.full((8, 8), 2.0), cam, alpha=alpha)
    assert value == 0.0


def test_distortion_of_two_samples():
    samples = DepthSamples(pixels=np.array([[1, 2]]), indptr=np.array([0, 2]), primitive=np.array([0, 1]),
                           weight=np.array([0.5, 0.25]), depth=np.array([2.0, 3.0]), ndc=np.array([0.4, 0.5]))
    assert loss_depth_distortion(samples) == pytest.approx(0.025)


def test_distortion_matches_pairwise_sum(rng):
    counts = rng.integers(0, 6, 20)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    total = int(indptr[-1])
    weight = rng.random(total)
    ndc = rng.random(total)
    samples = DepthSamples(pixels=np.zeros((20, 2), dtype=np.int64), indptr=indptr,
                           primitive=np.arange(total), weight=weight, depth=ndc + 1.0, ndc=ndc)
    expected = []
    for p in range(20):
        w = weight[indptr[p]:indptr[p + 1]]
        d = ndc[indptr[p]:indptr[p + 1]]
        expected.append(np.sum(np.outer(w, w) * np.abs(d[:, None] - d[None, :])))
    assert loss_depth_distortion(samples) == pytest.approx(np.mean(expected))
