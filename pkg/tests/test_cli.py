import json

import numpy as np
import pytest

from main import UsageError, build_parser, main
from storage.image_io import write_pfm, write_png_mask


def test_metrics_prints_json(tmp_path, capsys):
    a = np.full((16, 16, 3), 0.5)
    write_pfm(tmp_path / "a.pfm", a)
    write_pfm(tmp_path / "b.pfm", a - 0.1)
    assert main(["metrics", str(tmp_path / "a.pfm"), str(tmp_path / "b.pfm")]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["psnr"] == pytest.approx(20.0, rel=1e-4)
    assert 0.0 < report["ssim"] <= 1.0


def test_metrics_with_mask(tmp_path, capsys):
    a = np.zeros((16, 16, 3))
    b = a.copy()
    b[0, 0] = 1.0
    mask = np.ones((16, 16), dtype=bool)
    mask[0, 0] = False
    write_pfm(tmp_path / "a.pfm", a)
    write_pfm(tmp_path / "b.pfm", b)
    write_png_mask(tmp_path / "m.png", mask)
    assert main(["metrics", str(tmp_path / "a.pfm"), str(tmp_path / "b.pfm"), "--mask", str(tmp_path / "m.png"),
                 "--out", str(tmp_path / "run")]) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["psnr"] == 99.0
    assert (tmp_path / "run" / "run.json").exists()


def test_unknown_flag_is_a_usage_error():
    assert main(["render", "scene", "--dump-componets"]) == 1
    with pytest.raises(UsageError, match="did you mean --dump-components"):
        build_parser().parse_args(["render", "scene", "--dump-componets"])


def test_missing_input_is_a_data_error(tmp_path):
    assert main(["metrics", str(tmp_path / "nope.png"), str(tmp_path / "nope2.png")]) == 2
    assert main(["validate", str(tmp_path / "empty")]) == 2


def test_environment_overrides_flag_default(monkeypatch):
    monkeypatch.setenv("GLOSSREMOVE_TAU", "0.25")
    args = build_parser().parse_args(["light-mask", "scene"])
    assert args.tau == 0.25


@pytest.mark.slow
def test_end_to_end_commands(tmp_path, capsys):
    scene = tmp_path / "s"
    assert main(["gen", "--out", str(scene), "--width", "16", "--height", "16", "--cameras", "3"]) == 0
    assert (tmp_path / "s_gt" / "scene.json").exists()
    manifest = json.loads((scene / "run.json").read_text())
    assert manifest["subcommand"] == "gen"
    assert manifest["flags"]["width"] == 16

    assert main(["validate", str(scene)]) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["valid"] is True

    renders = tmp_path / "renders"
    assert main(["render", str(scene), "--out", str(renders), "--view", "0", "--dump-components"]) == 0
    for name in ("render_0.png", "render_0.pfm", "C_0.pfm", "G_0.pfm", "V_0.pfm", "M_0.pfm"):
        assert (renders / name).exists(), name
    assert main(["render", str(scene), "--view", "7"]) == 1

    masks = tmp_path / "masks"
    assert main(["light-mask", str(scene), "--out", str(masks), "--tau", "0.1"]) == 0
    assert (masks / "reflection_2.png").exists()

    assert main(["trace-debug", str(scene), "--view", "0", "--out", str(tmp_path / "dbg")]) == 0
    assert (tmp_path / "dbg" / "trace_0.txt").exists()

    removed = tmp_path / "r"
    assert main(["remove", str(scene), "--out", str(removed), "--stride", "2"]) == 0
    assert (removed / "removal.json").exists()
    assert json.loads((removed / "run.json").read_text())["subcommand"] == "remove"

    refined = tmp_path / "f"
    assert main(["refine", str(removed), "--out", str(refined), "--steps", "2"]) == 0
    assert (refined / "trace.csv").exists()
    assert (refined / "render_0.png").exists()
    assert json.loads((refined / "run.json").read_text())["diagnostics"]["steps"] == 2
