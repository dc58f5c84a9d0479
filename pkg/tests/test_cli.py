import json
import pathlib

import numpy as np
import pytest

from artirig.cli import main
from artirig.images import read_f32

from conftest import TINY_SPEC

FIT_CFG = {"steps": 2, "n_bones": 2, "n_samples": 6, "sds_samples": 4,
           "batch_rays": 30, "novel_rays": 8,
           "field": {"width": 8, "depth": 2, "L_sdf": 2, "L_color": 2,
                     "L_feature": 2, "feature_dim": 4}}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_json(tmp / "scene.json", TINY_SPEC)
    out = tmp / "ds"
    assert main(["synth", "--config", cfg, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def cli_checkpoint(cli_dataset, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("clifit")
    cfg = write_json(tmp / "fit.json", FIT_CFG)
    out = tmp / "run"
    code = main(["fit", str(cli_dataset), "--config", cfg, "--out", str(out)])
    assert code == 0
    return out / "checkpoint.json"


def test_print_config_dumps_defaults(capsys):
    assert main(["synth", "--print-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_frames"] == 16 and doc["width"] == 64

    assert main(["fit", "--print-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["steps"] == 3000 and doc["n_bones"] == 8
    assert doc["field"]["feature_dim"] == 16
    assert doc["weights"]["w_ncyc"] == 1.0


def test_flag_overrides_config_file(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {**TINY_SPEC, "seed": 3})
    assert main(["synth", "--config", cfg, "--seed", "9",
                 "--print-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["seed"] == 9
    assert doc["n_frames"] == TINY_SPEC["n_frames"]


def test_synth_requires_out(tmp_path):
    cfg = write_json(tmp_path / "c.json", TINY_SPEC)
    assert main(["synth", "--config", cfg]) == 2


def test_bad_config_json_is_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_unknown_config_key_is_config_error(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"warp_speed": 9})
    assert main(["synth", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_unknown_subcommand_is_parse_error(capsys):
    assert main(["transmogrify"]) == 2
    capsys.readouterr()


def test_fit_zero_steps(cli_dataset, tmp_path):
    cfg = write_json(tmp_path / "f.json", FIT_CFG)
    code = main(["fit", str(cli_dataset), "--config", cfg, "--steps", "0",
                 "--out", str(tmp_path / "run")])
    assert code == 0
    assert (tmp_path / "run" / "checkpoint.json").exists()


def test_fit_missing_dataset_dir(tmp_path):
    cfg = write_json(tmp_path / "f.json", FIT_CFG)
    assert main(["fit", str(tmp_path / "nowhere"), "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 2


def test_nan_learning_rate_aborts_numerically(cli_dataset, tmp_path):
    cfg = write_json(tmp_path / "f.json",
                     {**FIT_CFG, "steps": 3, "lr": float("nan")})
    code = main(["fit", str(cli_dataset), "--config", cfg,
                 "--out", str(tmp_path / "run")])
    assert code == 3


def test_render_writes_frame(cli_checkpoint, tmp_path):
    code = main(["render", str(cli_checkpoint), "--frame", "1", "--pair", "2",
                 "--samples", "6", "--out", str(tmp_path)])
    assert code == 0
    for suffix in ("rgb.ppm", "sil.ppm", "rgb.f32", "sil.f32", "flow.f32"):
        assert (tmp_path / f"0001.{suffix}").exists()


def test_render_bad_frame_index(cli_checkpoint, tmp_path):
    assert main(["render", str(cli_checkpoint), "--frame", "7",
                 "--out", str(tmp_path)]) == 2


def test_flow_command(cli_checkpoint, tmp_path):
    out = tmp_path / "flow.f32"
    code = main(["flow", str(cli_checkpoint), "--frame", "0", "--to", "1",
                 "--samples", "6", "--out", str(out)])
    assert code == 0
    assert read_f32(out).shape == (20, 20, 2)


def test_mesh_and_skeleton_commands(cli_checkpoint, tmp_path):
    code = main(["mesh", str(cli_checkpoint), "--resolution", "16",
                 "--out", str(tmp_path / "m.obj")])
    assert code in (0, 4)  # an early network may have no surface
    code = main(["skeleton", str(cli_checkpoint), "--resolution", "16",
                 "--threshold", "1", "--out", str(tmp_path / "s.json")])
    assert code in (0, 4)
    if code == 0:
        doc = json.loads((tmp_path / "s.json").read_text())
        assert doc["n_bones"] == 2


def test_empty_field_mesh_exits_nonzero(cli_dataset, tmp_path):
    # a large positive SDF offset keeps the field surface-free at init
    cfg = write_json(tmp_path / "f.json", {
        **FIT_CFG, "steps": 0,
        "field": {**FIT_CFG["field"], "sdf_bias": 3.0}})
    assert main(["fit", str(cli_dataset), "--config", cfg,
                 "--out", str(tmp_path / "run")]) == 0
    ck = tmp_path / "run" / "checkpoint.json"
    assert main(["mesh", str(ck), "--resolution", "12",
                 "--out", str(tmp_path / "m.obj")]) == 4
    assert main(["skeleton", str(ck), "--resolution", "12",
                 "--out", str(tmp_path / "s.json")]) == 4
    assert main(["export-bundle", str(ck), "--resolution", "12",
                 "--out", str(tmp_path / "b.json")]) == 4


def test_coverage_command(cli_checkpoint, tmp_path, capsys):
    out = tmp_path / "cov.json"
    assert main(["coverage", str(cli_checkpoint), "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out.splitlines()[-1])
    saved = json.loads(out.read_text())
    assert printed == saved
    assert saved["ratio"] == pytest.approx(1.0 / 36.0)
    assert len(saved["bins"]) == 36


def test_export_bundle_command(cli_checkpoint, tmp_path):
    out = tmp_path / "bundle.json"
    code = main(["export-bundle", str(cli_checkpoint), "--resolution", "16",
                 "--threshold", "1", "--out", str(out)])
    assert code in (0, 4)
    if code == 0:
        from artirig.bundle import import_bundle
        assert import_bundle(out).n_bones == 2


def test_dataset_layout_from_cli(cli_dataset):
    assert (cli_dataset / "scene.json").exists()
    files = {p.name for p in (cli_dataset / "frames").iterdir()}
    assert "0000.rgb.ppm" in files and "0002.meta.json" in files


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(pathlib.Path(root).rglob("*")) if p.is_file()}


def test_pipeline_bytes_deterministic(tmp_path):
    """synth -> fit -> export under fixed seeds lands identical bytes."""
    scene_cfg = write_json(tmp_path / "scene.json", TINY_SPEC)
    fit_cfg = write_json(tmp_path / "fit.json", FIT_CFG)
    trees = []
    for name in ("a", "b"):
        root = tmp_path / name
        ds, run = root / "ds", root / "run"
        assert main(["synth", "--config", scene_cfg, "--out", str(ds)]) == 0
        assert main(["fit", str(ds), "--config", fit_cfg,
                     "--out", str(run)]) == 0
        ck = run / "checkpoint.json"
        main(["render", str(ck), "--frame", "0", "--samples", "6",
              "--out", str(run / "render")])
        main(["export-bundle", str(ck), "--resolution", "12",
              "--threshold", "1", "--out", str(run / "bundle.json")])
        trees.append(tree_bytes(root))
    assert trees[0].keys() == trees[1].keys()
    for name in trees[0]:
        assert trees[0][name] == trees[1][name], name
