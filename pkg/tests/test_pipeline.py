import numpy as np
import pytest

from models.schemas import LossWeights, RefineOptions, RemovalOptions
from services.lighting_mask import reflection_from_specular
from services.metrics import psnr
from services.pipeline import load_removal, make_renderer, run_removal, save_removal
from services.refiner import refine, stage_losses


@pytest.fixture(scope="module")
def removal(mirror_sphere):
    return run_removal(mirror_sphere.scene, RemovalOptions(stride=2))


def test_removal_drops_the_target(mirror_sphere, removal):
    d = removal.diagnostics
    assert d.removed == int(mirror_sphere.target.sum())
    assert len(d.references) == 3
    assert d.new_primitives == removal.scene.gaussians.count - (mirror_sphere.scene.gaussians.count - d.removed)
    assert (removal.scene.gaussians.label < 0.5).all()
    assert len(removal.masks) == len(mirror_sphere.scene.cameras)
    assert all(t.completed or not t.maps for t in removal.tasks)


def test_removal_is_deterministic(mirror_sphere, removal):
    again = run_removal(mirror_sphere.scene, RemovalOptions(stride=2))
    for a, b in zip(removal.masks, again.masks):
        np.testing.assert_array_equal(a, b)
    for name, arr in removal.scene.gaussians.arrays().items():
        np.testing.assert_array_equal(getattr(again.scene.gaussians, name), arr, err_msg=name)


def test_save_and_load_removal(tmp_path, removal):
    written = save_removal(removal, tmp_path)
    assert str(tmp_path / "removal.json") in written
    assert (tmp_path / "render_0.png").exists()
    loaded = load_removal(tmp_path)
    assert loaded.diagnostics.references == removal.diagnostics.references
    assert loaded.scene.gaussians.count == removal.scene.gaussians.count
    for a, b in zip(removal.masks, loaded.masks):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(removal.lighting, loaded.lighting):
        np.testing.assert_array_equal(a.combined, b.combined)
    assert [t.view_id for t in loaded.tasks] == [t.view_id for t in removal.tasks]
    views = loaded.training_views()
    assert len(views) == len(removal.masks)
    assert sum(v.inpaint is not None for v in views) == 3


@pytest.fixture(scope="module")
def refined(removal):
    views = removal.training_views()
    return views, refine(removal.scene, views, options=RefineOptions(steps=500, seed=1)).scene


@pytest.mark.slow
def test_refined_scene_matches_the_object_free_renders(mirror_sphere, removal, refined):
    _, scene = refined
    truth = mirror_sphere.ground_truth
    before = make_renderer(mirror_sphere.scene)
    after = make_renderer(scene)
    reduction = []
    for i, cam in enumerate(scene.cameras):
        out = after.render(scene, cam)
        gt = truth.references[i].rgb.astype(np.float64)
        # former reflection footprint stays inside the compared pixels
        assert psnr(np.clip(out.color, 0.0, 1.0), gt, ~removal.masks[i]) >= 25.0

        original = before.render(mirror_sphere.scene, cam)
        e_before = reflection_from_specular(original.specular, original.gbuffer, before.translator).sum()
        e_after = reflection_from_specular(out.specular, out.gbuffer, after.translator).sum()
        if e_before > 0:
            reduction.append(1.0 - e_after / e_before)
    assert reduction
    assert min(reduction) >= 0.9


@pytest.mark.slow
def test_refinement_cuts_the_masked_color_loss(removal, refined):
    views, scene = refined
    renderer = make_renderer(removal.scene)

    def color_loss(s):
        return sum(stage_losses(renderer.render(s, v.camera), v, LossWeights(), 0.0)[0]["color"] for v in views)

    initial = color_loss(removal.scene)
    assert initial > 0.0
    assert color_loss(scene) < 0.2 * initial
