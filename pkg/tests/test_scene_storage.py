import json
import struct

import numpy as np
import pytest

from conftest import axis_camera, random_cloud, random_quats
from models.environment import EnvironmentMap
from models.errors import ChecksumError, ImageFormatError, SceneFormatError, SceneValidationError
from models.scene import Camera, GaussianCloud, Scene, ViewReference, validate_scene
from storage.image_io import read_pfm, read_png_mask, write_pfm, write_png_mask
from storage.scene_repository import SceneRepository, load_scene, save_scene
from utils.checksum import fnv1a64
from utils.geometry import covariance


def small_scene(seed=0, n=20, sh_degree=0) -> Scene:
    rng = np.random.default_rng(seed)
    cloud = random_cloud(rng, n, dtype=np.float32)
    if sh_degree:
        rest = (sh_degree + 1) ** 2 - 1
        cloud.sh_rest = rng.normal(0.0, 0.1, (n, rest, 3)).astype(np.float32)
    env = EnvironmentMap.constant((0.5, 0.25, 0.75), edge=16, levels=5)
    cam = Camera.look_at((0.0, -3.0, 2.0), (0.0, 0.0, 0.0), 24, 16, 50.0)
    ref = ViewReference(rgb=np.full((16, 24, 3), 0.5), object_mask=np.eye(16, 24, dtype=bool),
                        region_mask=np.zeros((16, 24), dtype=bool), normal=np.zeros((16, 24, 3)))
    return Scene(gaussians=cloud, env=env, cameras=[axis_camera(24, 16), cam], references={1: ref})


def rewrite_blob(root, mutate):
    header = json.loads((root / "scene.json").read_text())
    blob = (root / "attributes.bin").read_bytes()[:-8]
    table = np.frombuffer(blob, dtype="<f4").reshape(header["count"], header["stride"]).copy()
    mutate(table)
    payload = table.astype("<f4").tobytes()
    (root / "attributes.bin").write_bytes(payload + struct.pack("<Q", fnv1a64(payload)))


@pytest.mark.parametrize("sh_degree", [0, 2])
def test_save_load_round_trip(tmp_path, sh_degree):
    scene = small_scene(sh_degree=sh_degree)
    save_scene(scene, tmp_path / "scene")
    loaded = load_scene(tmp_path / "scene")

    for name, arr in scene.gaussians.arrays().items():
        np.testing.assert_array_equal(getattr(loaded.gaussians, name), arr)
    assert loaded.gaussians.sh_degree == sh_degree
    np.testing.assert_array_equal(loaded.env.faces, scene.env.faces)
    assert len(loaded.cameras) == 2
    np.testing.assert_allclose(loaded.cameras[1].rotation, scene.cameras[1].rotation)
    assert loaded.cameras[1].shape == (16, 24)
    assert sorted(loaded.references) == [1]
    np.testing.assert_array_equal(loaded.references[1].object_mask, scene.references[1].object_mask)
    np.testing.assert_allclose(loaded.references[1].rgb, 128 / 255.0)


def test_checksum_detects_corruption(tmp_path):
    save_scene(small_scene(), tmp_path)
    blob = bytearray((tmp_path / "attributes.bin").read_bytes())
    blob[0] ^= 0x01
    (tmp_path / "attributes.bin").write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        load_scene(tmp_path)


def test_opacity_out_of_range_is_rejected_on_load(tmp_path):
    save_scene(small_scene(), tmp_path)

    def bump(table):
        table[0, 10] = 1.5

    rewrite_blob(tmp_path, bump)
    with pytest.raises(SceneValidationError) as info:
        load_scene(tmp_path)
    assert any("opacity" in v for v in info.value.violations)


def test_count_mismatch_is_a_format_error(tmp_path):
    save_scene(small_scene(), tmp_path)
    header = json.loads((tmp_path / "scene.json").read_text())
    header["count"] += 1
    (tmp_path / "scene.json").write_text(json.dumps(header))
    with pytest.raises(SceneFormatError, match="attribute-count mismatch"):
        load_scene(tmp_path)


def test_missing_header_names_the_file(tmp_path):
    with pytest.raises(SceneFormatError) as info:
        SceneRepository(tmp_path).load()
    assert info.value.field == "scene.json"


def test_save_refuses_invalid_scene(tmp_path):
    scene = small_scene()
    scene.gaussians.scale[3, 1] = 0.0
    with pytest.raises(SceneValidationError):
        save_scene(scene, tmp_path)
    assert not (tmp_path / "attributes.bin").exists()


def test_save_into_unwritable_location_raises_oserror(tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("not a directory")
    with pytest.raises(OSError):
        save_scene(small_scene(), blocker / "scene")


def test_validate_reports_each_violation():
    scene = small_scene()
    g = scene.gaussians
    g.scale[0, 0] = 0.0
    g.rotation[1] *= 0.9
    g.opacity[2] = 1.0
    g.normal[3] *= 2.0
    messages = validate_scene(scene)
    for needle in ("scale not positive", "rotation not unit", "opacity outside (0,1)", "normal not unit"):
        assert any(needle in m for m in messages), needle


def test_validate_accepts_well_formed_scene():
    assert validate_scene(small_scene()) == []


def test_environment_edge_must_divide_into_levels():
    env = EnvironmentMap(faces=np.ones((6, 12, 12, 3)), levels=5)
    scene = Scene(gaussians=GaussianCloud.empty(), env=env)
    assert any("not divisible" in m for m in validate_scene(scene))


def test_covariance_is_spd_with_scale_eigenvalues(rng):
    scales = rng.uniform(0.05, 2.0, (50, 3))
    quats = random_quats(rng, 50)
    cov = covariance(scales, quats)
    np.testing.assert_allclose(cov, np.transpose(cov, (0, 2, 1)), atol=1e-12)
    eig = np.linalg.eigvalsh(cov)
    np.testing.assert_allclose(eig, np.sort(scales ** 2, axis=1), rtol=1e-9)


def test_cloud_subset_and_concat(rng):
    cloud = random_cloud(rng, 10)
    keep = np.arange(10) % 2 == 0
    part = cloud.subset(keep)
    assert part.count == 5
    both = part.concat(cloud.subset(~keep))
    assert both.count == 10
    np.testing.assert_array_equal(both.position[:5], cloud.position[::2])
    assert GaussianCloud.from_primitives([cloud.primitive(3)], dtype=np.float64).count == 1


def test_camera_unproject_inverts_project():
    cam = Camera.look_at((1.0, -2.0, 1.5), (0.0, 0.0, 0.0), 32, 24, 60.0)
    pts = np.array([[0.1, 0.2, 0.0], [-0.3, 0.1, 0.4]])
    uv, z = cam.project(pts)
    np.testing.assert_allclose(cam.unproject(uv[:, 0], uv[:, 1], z), pts, atol=1e-12)


def test_pfm_round_trip_keeps_orientation(tmp_path):
    img = np.arange(12, dtype=np.float32).reshape(3, 4)
    write_pfm(tmp_path / "a.pfm", img)
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), img)
    rgb = np.random.default_rng(0).random((5, 3, 3)).astype(np.float32)
    write_pfm(tmp_path / "b.pfm", rgb)
    np.testing.assert_array_equal(read_pfm(tmp_path / "b.pfm"), rgb)


def test_pfm_rejects_truncated_payload(tmp_path):
    write_pfm(tmp_path / "a.pfm", np.ones((4, 4)))
    data = (tmp_path / "a.pfm").read_bytes()
    (tmp_path / "a.pfm").write_bytes(data[:-4])
    with pytest.raises(ImageFormatError, match="truncated"):
        read_pfm(tmp_path / "a.pfm")


def test_png_mask_round_trip(tmp_path):
    mask = np.zeros((6, 7), dtype=bool)
    mask[2:4, 1:5] = True
    write_png_mask(tmp_path / "m.png", mask)
    np.testing.assert_array_equal(read_png_mask(tmp_path / "m.png"), mask)
