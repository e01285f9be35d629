import numpy as np
import pytest

from conftest import random_cloud, single_cloud
from models.schemas import TraceOpts
from services.tracer import (build_bvh, composite_hits, intersect_ray, linear_scan_hits, trace, trace_batch,
                             trace_debug)

Z = np.array([0.0, 0.0, 1.0])
ORIGIN = np.zeros(3)


def test_single_primitive_builds_one_leaf(scene_factory):
    bvh = build_bvh(scene_factory(single_cloud((0.0, 0.0, 2.0))))
    assert bvh.node_count_total == 1
    assert bvh.leaves() == [0]


def test_glossy_primitives_are_not_traced(scene_factory):
    scene = scene_factory(single_cloud((0.0, 0.0, 2.0), region=0.0))
    bvh = build_bvh(scene)
    assert bvh.empty
    res = trace(bvh, scene, ORIGIN, Z)
    assert res.visibility == 1.0
    assert res.label == 0.0
    np.testing.assert_array_equal(res.indirect, 0.0)


def test_ray_through_mean_peaks_at_opacity(scene_factory):
    bvh = build_bvh(scene_factory(single_cloud((0.0, 0.0, 2.0), opacity=0.8)))
    hits = intersect_ray(bvh, ORIGIN, Z)
    assert len(hits) == 1
    assert hits[0].t == pytest.approx(2.0)
    assert hits[0].alpha == pytest.approx(0.8)


def test_ray_at_three_sigma(scene_factory):
    scene = scene_factory(single_cloud((0.3, 0.0, 2.0), scale=0.1, opacity=0.8))
    hits = intersect_ray(build_bvh(scene, opts=TraceOpts(sigma_cutoff=4.0)), ORIGIN, Z)
    assert hits[0].alpha == pytest.approx(0.8 * np.exp(-4.5))
    strict = build_bvh(scene, opts=TraceOpts(sigma_cutoff=4.0, alpha_min=0.01))
    assert intersect_ray(strict, ORIGIN, Z) == []


def test_non_unit_direction_is_rejected(scene_factory):
    bvh = build_bvh(scene_factory(single_cloud((0.0, 0.0, 2.0))))
    with pytest.raises(ValueError):
        intersect_ray(bvh, ORIGIN, 2.0 * Z)


def test_single_hit_composite(scene_factory):
    scene = scene_factory(single_cloud((0.0, 0.0, 2.0), opacity=0.6, color=(1.0, 0.0, 0.0), label=1.0))
    res = trace(build_bvh(scene), scene, ORIGIN, Z)
    np.testing.assert_allclose(res.indirect, [0.6, 0.0, 0.0])
    assert res.label == pytest.approx(0.6)
    assert res.visibility == pytest.approx(0.4)


def test_two_hits_label_only_from_object(scene_factory):
    near = single_cloud((0.0, 0.0, 2.0), opacity=0.5, label=1.0)
    far = single_cloud((0.0, 0.0, 3.0), opacity=0.5, label=0.0)
    scene = scene_factory(far.concat(near))
    res = trace(build_bvh(scene), scene, ORIGIN, Z)
    assert res.label == pytest.approx(0.5)
    assert res.visibility == pytest.approx(0.25)


def test_environment_fills_remaining_transmittance(scene_factory, constant_env):
    scene = scene_factory(single_cloud((0.0, 0.0, 2.0), opacity=0.6, color=(0.0, 0.0, 0.0)))
    res = trace(build_bvh(scene), scene, ORIGIN, Z, env=constant_env)
    np.testing.assert_allclose(res.incident, 0.4)


def random_rays(rng, n):
    origins = np.column_stack([rng.uniform(-0.5, 0.5, (n, 2)), np.zeros(n)])
    targets = np.column_stack([rng.uniform(-1.2, 1.2, (n, 2)), rng.uniform(2.0, 4.0, n)])
    dirs = targets - origins
    return origins, dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@pytest.mark.parametrize("seed", [0, 1])
def test_bvh_matches_linear_scan(scene_factory, seed):
    rng = np.random.default_rng(seed)
    scene = scene_factory(random_cloud(rng, 100, region=1.0))
    bvh = build_bvh(scene)
    origins, dirs = random_rays(rng, 1000)
    radiance, vis, label = trace_batch(bvh, scene, origins, dirs)
    for r in range(origins.shape[0]):
        fast = intersect_ray(bvh, origins[r], dirs[r])
        slow = linear_scan_hits(scene, origins[r], dirs[r])
        assert [h.index for h in fast] == [h.index for h in slow]
        np.testing.assert_allclose([h.t for h in fast], [h.t for h in slow], atol=1e-9)
        np.testing.assert_allclose([h.alpha for h in fast], [h.alpha for h in slow], atol=1e-9)
        ref = composite_hits(scene, slow, dirs[r])
        np.testing.assert_allclose(radiance[r], ref.indirect, atol=1e-6)
        assert vis[r] == pytest.approx(ref.visibility, abs=1e-6)
        assert label[r] == pytest.approx(ref.label, abs=1e-6)


def test_leaf_boxes_contain_their_primitives(rng, scene_factory):
    scene = scene_factory(random_cloud(rng, 200, region=1.0))
    bvh = build_bvh(scene)
    seen = []
    for node in bvh.leaves():
        start, count = bvh.node_start[node], bvh.node_count[node]
        for p in bvh.leaf_prims[start:start + count]:
            assert (bvh.prim_lo[p] >= bvh.node_lo[node] - 1e-12).all()
            assert (bvh.prim_hi[p] <= bvh.node_hi[node] + 1e-12).all()
            seen.append(int(p))
    assert sorted(seen) == list(range(200))


def test_label_and_visibility_are_bounded(rng, scene_factory):
    cloud = random_cloud(rng, 150, region=1.0)
    cloud.label[:] = 1.0
    scene = scene_factory(cloud)
    origins, dirs = random_rays(rng, 500)
    _, vis, label = trace_batch(build_bvh(scene), scene, origins, dirs)
    assert (label + vis <= 1.0 + 1e-9).all()
    np.testing.assert_allclose(label, 1.0 - vis, atol=1e-9)


def test_thread_count_does_not_change_trace(rng, scene_factory):
    scene = scene_factory(random_cloud(rng, 120, region=1.0))
    bvh = build_bvh(scene)
    origins, dirs = random_rays(rng, 9000)
    one = trace_batch(bvh, scene, origins, dirs, threads=1)
    four = trace_batch(bvh, scene, origins, dirs, threads=4)
    for a, b in zip(one, four):
        np.testing.assert_array_equal(a, b)


def test_trace_debug_lists_hits(scene_factory):
    scene = scene_factory(single_cloud((0.0, 0.0, 2.0), opacity=0.6))
    text = trace_debug(build_bvh(scene), scene, ORIGIN[None], Z[None])
    assert "hits 1" in text
    assert "hit 0 t 2.000000 alpha 0.600000" in text
