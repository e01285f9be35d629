import numpy as np
import pytest
from pydantic import ValidationError

from config import Config
from main import main
from models.environment import EnvironmentMap
from models.schemas import EnvSpec
from services.scene_generator import gen_synthetic_scene, plane_cloud, preset
from storage.scene_repository import save_scene


def tiny(**overrides):
    params = dict(width=8, height=8, camera_count=2, plane_extent=0.3, plane_spacing=0.1, with_references=False)
    params.update(overrides)
    return preset("mirror-sphere", **params)


@pytest.mark.parametrize("override", [{"camera_count": 0}, {"width": 0}, {"height": -2},
                                      {"plane_roughness": 0.5}, {"plane_roughness": 0.0}])
def test_preset_rejects_out_of_range_overrides(override):
    with pytest.raises(ValidationError):
        preset("mirror-sphere", **override)


def test_preset_keeps_its_own_values():
    spec = preset("glossy-box", width=12)
    assert spec.width == 12
    assert spec.plane_roughness == 0.1
    assert spec.env.kind == "checker"


def test_gen_with_zero_cameras_is_a_data_error(tmp_path):
    assert main(["gen", "--out", str(tmp_path / "s"), "--cameras", "0"]) == 2
    assert not (tmp_path / "s" / "scene.json").exists()


def test_same_seed_gives_identical_attribute_blob(tmp_path):
    for name in ("a", "b"):
        save_scene(gen_synthetic_scene(tiny(seed=5, plane_jitter=0.2)).scene, tmp_path / name)
    assert (tmp_path / "a" / "attributes.bin").read_bytes() == (tmp_path / "b" / "attributes.bin").read_bytes()


def test_jitter_follows_the_seed():
    a = plane_cloud(tiny(seed=1, plane_jitter=0.3))
    b = plane_cloud(tiny(seed=2, plane_jitter=0.3))
    grid = plane_cloud(tiny(seed=1))
    assert not np.array_equal(a.position, b.position)
    np.testing.assert_array_equal(a.position[:, 2], 0.0)
    np.testing.assert_allclose(a.position[:, :2], grid.position[:, :2], atol=0.3 * 0.1 + 1e-6)


def test_without_jitter_the_seed_is_irrelevant():
    np.testing.assert_array_equal(plane_cloud(tiny(seed=1)).position, plane_cloud(tiny(seed=9)).position)


def test_environment_edge_defaults_to_config():
    assert EnvSpec().edge == Config.ENV_EDGE
    env = EnvironmentMap.constant(0.5)
    assert env.edge == Config.ENV_EDGE
    assert env.levels == Config.ENV_LEVELS
