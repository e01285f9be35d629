import json

import numpy as np
import pytest
from scipy import ndimage

from models.buffers import SpecularBuffers
from models.errors import NetworkLoadError
from models.network import ConvNetSpec
from models.schemas import FilterOpts
from services.screen_filter import (BINOMIAL, RoughnessTranslator, build_pyramid, filter_image, filter_image_backward,
                                    filter_specular, sample_filtered, translate_roughness)
from storage.network_store import load_network, save_network


def test_constant_image_gives_constant_pyramid():
    pyr = build_pyramid(np.full((16, 16), 0.7), levels=5)
    assert [lv.shape for lv in pyr.levels] == [(16, 16), (8, 8), (4, 4), (2, 2), (1, 1)]
    for level in pyr.levels:
        np.testing.assert_allclose(level, 0.7, rtol=1e-12)


def test_first_level_is_blurred_and_decimated(rng):
    img = rng.random((12, 10))
    pyr = build_pyramid(img, levels=2)
    kernel = np.outer(BINOMIAL, BINOMIAL)
    expected = ndimage.convolve(img, kernel, mode="nearest")[::2, ::2]
    np.testing.assert_allclose(pyr.levels[1], expected, atol=1e-12)


def test_pyramid_rejects_non_finite_input():
    img = np.zeros((8, 8))
    img[3, 3] = np.nan
    with pytest.raises(ValueError):
        build_pyramid(img)


def test_analytic_translation():
    assert translate_roughness(np.zeros((2, 2)), np.ones((2, 2)))[0, 0] == 0.0
    opts = FilterOpts(c0=1.0, c1=1.0)
    out = translate_roughness(np.full((2, 2), 0.5), np.ones((2, 2)), opts=opts)
    np.testing.assert_allclose(out, 0.25)


@pytest.mark.parametrize("bias, expected", [(0.3, 0.3), (1.7, 1.0), (-0.2, 0.0)])
def test_constant_network_output_is_clamped(bias, expected):
    rs = translate_roughness(np.random.default_rng(0).random((6, 7)), np.ones((6, 7)), net=ConvNetSpec.zeros(bias))
    np.testing.assert_allclose(rs, expected)


def test_network_input_gradient_matches_difference(rng):
    translator = RoughnessTranslator(net=ConvNetSpec.random(rng))
    rough = rng.uniform(0.2, 0.6, (5, 6))
    depth = rng.uniform(1.0, 3.0, (5, 6))
    state = translator.forward(rough, depth)
    weights = rng.random((5, 6))
    grad = translator.backward(state, weights, depth)
    h = 1e-6
    for y, x in [(0, 0), (2, 3), (4, 5)]:
        up, down = rough.copy(), rough.copy()
        up[y, x] += h
        down[y, x] -= h
        fd = (np.sum(weights * translator.forward(up, depth).rs)
              - np.sum(weights * translator.forward(down, depth).rs)) / (2 * h)
        assert grad[y, x] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_sample_at_zero_roughness_is_the_pixel(rng):
    img = rng.random((16, 16, 3))
    pyr = build_pyramid(img)
    np.testing.assert_allclose(sample_filtered(pyr, (5, 9), 0.0), img[9, 5])


def test_sample_of_constant_image_is_constant():
    pyr = build_pyramid(np.full((16, 16), 0.4))
    for rs in (0.0, 0.3, 0.55, 1.0):
        assert sample_filtered(pyr, (7.5, 3.25), rs) == pytest.approx(0.4)


def specular_buffers(rng, shape, indirect=None, visibility=None) -> SpecularBuffers:
    return SpecularBuffers(
        fresnel=rng.uniform(0.04, 1.0, shape + (3,)),
        indirect=rng.random(shape + (3,)) if indirect is None else np.broadcast_to(indirect, shape + (3,)).copy(),
        direct=rng.random(shape + (3,)),
        visibility=rng.random(shape) if visibility is None else np.full(shape, visibility),
        label=np.zeros(shape), traced=np.ones(shape, dtype=bool),
        reflect_dirs=np.zeros(shape + (3,)), diagnostics={},
    )


def test_zero_roughness_glossy_equals_ideal_specular(rng):
    spec = specular_buffers(rng, (16, 20))
    state = filter_specular(spec, np.zeros((16, 20)), np.ones((16, 20)))
    np.testing.assert_allclose(state.glossy, spec.ideal(), rtol=1e-12)


def test_constant_inputs_make_glossy_roughness_independent(rng):
    spec = specular_buffers(rng, (16, 16), indirect=(0.2, 0.3, 0.4), visibility=0.6)
    depth = np.ones((16, 16))
    smooth = filter_specular(spec, np.zeros((16, 16)), depth).glossy
    rough = filter_specular(spec, rng.random((16, 16)), depth).glossy
    np.testing.assert_allclose(rough, smooth, rtol=1e-10)


def test_edge_widens_with_roughness():
    img = np.zeros((8, 64))
    img[:, 32:] = 1.0
    widths = []
    for rs in (0.0, 0.25, 0.5):
        row = filter_image(img, np.full(img.shape, rs), 5).value[4]
        widths.append(int(((row > 0.1) & (row < 0.9)).sum()))
    assert widths[0] == 0
    assert widths[0] < widths[1] < widths[2]


def test_filter_backward_is_adjoint(rng):
    img = rng.random((10, 12))
    rs = rng.random((10, 12))
    g = rng.random((10, 12))
    filtered = filter_image(img, rs, 4)
    other = rng.random((10, 12))
    lhs = np.sum(g * filter_image(other, rs, 4).value)
    rhs = np.sum(filter_image_backward(filtered, g) * other)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_network_round_trip(tmp_path, rng):
    net = ConvNetSpec.random(rng)
    save_network(net, tmp_path)
    loaded = load_network(tmp_path)
    for a, b in zip(net.layers, loaded.layers):
        np.testing.assert_allclose(b.weight, a.weight.astype(np.float32))
        assert a.relu == b.relu


def test_network_manifest_mismatch_is_rejected(tmp_path, rng):
    save_network(ConvNetSpec.random(rng), tmp_path)
    manifest = json.loads((tmp_path / "net.json").read_text())
    manifest["layers"][2]["weight"] = [8, 8, 5, 5]
    (tmp_path / "net.json").write_text(json.dumps(manifest))
    with pytest.raises(NetworkLoadError):
        load_network(tmp_path)


def test_missing_network_file_is_a_load_error(tmp_path):
    with pytest.raises(NetworkLoadError):
        load_network(tmp_path)
