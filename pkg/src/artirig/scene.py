"""Synthetic articulated scene and dataset writer.

The stand-in subject is a two-segment capsule body on a hinge: each half
is carried by one bone, the right bone swings by +theta/2 and the left by
-theta/2 around the z axis through the joint, with an optional rigid drift
and camera orbit.  Supervision images are produced by the same renderer
the fitter uses, with deterministic midpoint sampling, so a fit evaluated
at the ground-truth parameters reproduces the data exactly.

Layout written by `synth_dataset`:

    out/scene.json                    ground truth + rig description
    out/frames/NNNN.rgb.ppm           8-bit preview
    out/frames/NNNN.sil.ppm           8-bit silhouette preview
    out/frames/NNNN.rgb.f32           float32 color, training target
    out/frames/NNNN.sil.f32           float32 opacity
    out/frames/NNNN.feat.f32          float32 feature channels
    out/frames/NNNN.flow.f32          float32 flow to the paired frame
    out/frames/NNNN.meta.json         frame pairing + camera ground truth
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import no_grad, value
from .fields import AnalyticField, Capsule, SmoothUnion
from .geometry import look_at_pose, quat_from_axis_angle, quat_identity, quat_rotate
from .images import write_f32, write_ppm
from .params import ParameterStore
from .rendering import render_flow_image, render_image
from .skinning import SkinningModel
from .warping import MotionSequence

CAPSULE_RADIUS = 0.16
ARM_LENGTH = 0.55
BONE_OFFSET = 0.3
BONE_LOG_SCALES = np.log([0.35, 0.14, 0.14])
SMOOTH_K = 0.05


@dataclass
class SyntheticSceneSpec:
    n_frames: int = 16
    width: int = 64
    height: int = 64
    focal: float = 80.0
    camera_distance: float = 2.5
    amplitude: float = 0.5  # peak hinge angle in radians
    drift: tuple = (0.0, 0.0, 0.0)  # rigid translation per frame
    orbit_degrees: float = 0.0  # total camera azimuth sweep over the clip
    seed: int = 0
    feature_dim: int = 8
    beta: float = 0.02
    n_samples: int = 64

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("need at least two frames")
        if not np.all(np.isfinite([self.amplitude, self.orbit_degrees,
                                   *self.drift])):
            raise ValueError("trajectory parameters must be finite")
        if self.width < 2 or self.height < 2:
            raise ValueError("image size too small")

    @property
    def near(self) -> float:
        return self.camera_distance - 1.2

    @property
    def far(self) -> float:
        return self.camera_distance + 1.2

    @property
    def intrinsics(self):
        return (self.focal, self.focal, self.width / 2.0, self.height / 2.0,
                self.width, self.height)


def gt_shape() -> SmoothUnion:
    return SmoothUnion(
        (Capsule(a=(-ARM_LENGTH, 0.0, 0.0), b=(0.0, 0.0, 0.0),
                 radius=CAPSULE_RADIUS),
         Capsule(a=(0.0, 0.0, 0.0), b=(ARM_LENGTH, 0.0, 0.0),
                 radius=CAPSULE_RADIUS)),
        k=SMOOTH_K)


def hinge_angles(spec: SyntheticSceneSpec) -> np.ndarray:
    t = np.arange(spec.n_frames)
    return spec.amplitude * np.sin(2.0 * np.pi * t / spec.n_frames)


def pair_frame(t: int, n_frames: int) -> int:
    return t + 1 if t + 1 < n_frames else t - 1


def build_gt(spec: SyntheticSceneSpec):
    """Ground-truth models: analytic field, two bones, hinge trajectories."""
    store = ParameterStore()
    field = AnalyticField(gt_shape(), beta=spec.beta,
                          feature_dim=spec.feature_dim)
    skin = SkinningModel(store, 2,
                         init_centers=np.array([[-BONE_OFFSET, 0.0, 0.0],
                                                [BONE_OFFSET, 0.0, 0.0]]))
    skin.log_scales.data[...] = BONE_LOG_SCALES

    T = spec.n_frames
    if spec.orbit_degrees:
        az = np.deg2rad(spec.orbit_degrees) * np.arange(T) / max(T - 1, 1)
        cq = np.zeros((T, 4))
        ct = np.zeros((T, 3))
        for t in range(T):
            pos = spec.camera_distance * np.array(
                [np.sin(az[t]), 0.0, -np.cos(az[t])])
            pose = look_at_pose(pos)
            cq[t], ct[t] = pose.quat, pose.trans
    else:
        cq = np.tile(quat_identity(), (T, 1))
        ct = np.tile([0.0, 0.0, spec.camera_distance], (T, 1))

    seq = MotionSequence(store, T, 2, spec.intrinsics,
                         init_cam_quats=cq, init_cam_trans=ct)
    rest = value(seq.rest_trans)
    angles = hinge_angles(spec)
    drift = np.asarray(spec.drift, dtype=np.float64)
    for t in range(T):
        shift = drift * t
        for b, sign in enumerate((-0.5, 0.5)):
            dq = quat_from_axis_angle([0.0, 0.0, 1.0], sign * angles[t])
            # J_t = dJ compose J*, so delta_transform recovers (dq, shift)
            seq.bone_quats.data[t, b] = dq
            seq.bone_trans.data[t, b] = quat_rotate(dq, rest[b]) + shift
    return store, field, skin, seq


def gt_models_from_scene(doc: dict):
    """Reconstruct the ground-truth models from a scene.json document."""
    spec_doc = dict(doc["spec"])
    spec_doc["drift"] = tuple(spec_doc["drift"])
    return build_gt(SyntheticSceneSpec(**spec_doc))


def scene_document(spec: SyntheticSceneSpec, skin, seq) -> dict:
    return {
        "format_version": 1,
        "spec": {**asdict(spec), "drift": list(spec.drift)},
        "intrinsics": list(spec.intrinsics),
        "near": spec.near,
        "far": spec.far,
        "pairs": [pair_frame(t, spec.n_frames) for t in range(spec.n_frames)],
        "bones": {
            "centers": value(skin.centers).tolist(),
            "log_scales": value(skin.log_scales).tolist(),
            "temperature": skin.temperature,
        },
        "motion": {
            "bone_quats": value(seq.bone_quats).tolist(),
            "bone_trans": value(seq.bone_trans).tolist(),
        },
        "camera": {
            "quats": value(seq.cam_quats).tolist(),
            "trans": value(seq.cam_trans).tolist(),
        },
    }


def synth_dataset(spec: SyntheticSceneSpec, out_dir) -> pathlib.Path:
    """Render and write the dataset; returns the dataset root."""
    out = pathlib.Path(out_dir)
    frames = out / "frames"
    frames.mkdir(parents=True, exist_ok=True)
    store, field, skin, seq = build_gt(spec)
    kw = dict(n_samples=spec.n_samples, jitter=False,
              near=spec.near, far=spec.far)
    with no_grad():
        for t in range(spec.n_frames):
            color, opacity, feature = render_image(
                field, seq, skin, t, with_feature=True,
                n_samples=spec.n_samples, jitter=False,
                near=spec.near, far=spec.far)
            t2 = pair_frame(t, spec.n_frames)
            # weight flow by opacity: empty pixels carry no motion signal
            # (the raw composite would report -pixel there, num/eps noise)
            flow = opacity[..., None] * render_flow_image(field, seq, skin,
                                                          t, t2, **kw)
            stem = frames / f"{t:04d}"
            write_ppm(f"{stem}.rgb.ppm", color)
            write_ppm(f"{stem}.sil.ppm", opacity)
            write_f32(f"{stem}.rgb.f32", color)
            write_f32(f"{stem}.sil.f32", opacity)
            write_f32(f"{stem}.feat.f32", feature)
            write_f32(f"{stem}.flow.f32", flow)
            meta = {
                "frame": t,
                "pair": t2,
                "camera": {"quat": value(seq.cam_quats)[t].tolist(),
                           "trans": value(seq.cam_trans)[t].tolist()},
            }
            with open(f"{stem}.meta.json", "w") as fh:
                json.dump(meta, fh)
    with open(out / "scene.json", "w") as fh:
        json.dump(scene_document(spec, skin, seq), fh)
    return out
