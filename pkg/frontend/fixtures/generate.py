"""Regenerate the viewer's golden fixtures from the primary engine.

Produces, in this directory:
  bundle.json             two-bone capsule bundle (CLI export-bundle)
  mesh.obj                the same mesh as OBJ (CLI mesh)
  golden_pose.json        pose file: bone 1 rotated 30 degrees about z
  golden_posed.json       engine-posed vertex positions for that pose
  bundle_corrupt.json     bundle.json with one base64 payload truncated

Run from the repository root:
  python3 frontend/fixtures/generate.py
"""
import json
import math
import pathlib
import subprocess
import sys
import tempfile

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent.parent

SCENE = {"n_frames": 6, "width": 48, "height": 48, "focal": 60.0,
         "amplitude": 0.6, "feature_dim": 4, "n_samples": 48}
FIT = {"steps": 400, "n_bones": 2, "n_samples": 24, "batch_rays": 192,
       "lr": 5e-3, "lr_min_ratio": 0.1, "prior": "none",
       "field": {"width": 24, "depth": 2, "L_sdf": 3, "L_color": 2,
                 "L_feature": 2, "feature_dim": 4}}


def cli(*args):
    subprocess.run([sys.executable, "-m", "artirig.cli", *args],
                   check=True, cwd=ROOT)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        scene_cfg = tmp / "scene.json"
        fit_cfg = tmp / "fit.json"
        scene_cfg.write_text(json.dumps(SCENE))
        fit_cfg.write_text(json.dumps(FIT))
        cli("synth", "--config", str(scene_cfg), "--out", str(tmp / "ds"))
        cli("fit", str(tmp / "ds"), "--config", str(fit_cfg),
            "--out", str(tmp / "run"))
        cli("export-bundle", str(tmp / "run" / "checkpoint.json"),
            "--out", str(HERE / "bundle.json"))
        cli("mesh", str(tmp / "run" / "checkpoint.json"),
            "--out", str(HERE / "mesh.obj"))

    import numpy as np
    from artirig.bundle import import_bundle
    from artirig.meshing import SkinnedMesh, TriangleMesh, pose_mesh

    half = math.radians(30.0) / 2.0
    quat = [math.cos(half), 0.0, 0.0, math.sin(half)]
    pose = {"1": {"rotation_quat_wxyz": quat,
                  "translation_xyz": [0.0, 0.0, 0.0]}}
    (HERE / "golden_pose.json").write_text(json.dumps(pose, indent=1))

    b = import_bundle(HERE / "bundle.json")
    skinned = SkinnedMesh(TriangleMesh(b.vertices, b.faces, b.colors),
                          b.weights, b.dominant)
    quats = np.array([[1.0, 0, 0, 0], quat])
    trans = np.zeros((2, 3))
    posed = pose_mesh(skinned, quats, trans)
    (HERE / "golden_posed.json").write_text(json.dumps(
        {"pose_file": "golden_pose.json",
         "vertices": posed.vertices.tolist()}))

    doc = json.loads((HERE / "bundle.json").read_text())
    doc["mesh"]["vertices"] = doc["mesh"]["vertices"][:-8] + "!corrupt"
    (HERE / "bundle_corrupt.json").write_text(json.dumps(doc))
    print("fixtures written under", HERE)


if __name__ == "__main__":
    main()
