"""Time-dependent forward/backward warps between canonical and observation space.

Per-frame bone transforms J_{t,b} act relative to fixed rest transforms
J*_b through dJ = J_{t,b} (J*_b)^{-1}.  The forward deformation blends the
per-bone rigid motions with skinning weights taken at the canonical (rest)
query; the backward deformation blends the inverse motions with weights
taken at the posed bones.  Composing with the per-frame camera transform
P_t gives the full warps

    warp_forward  = P_t o deform_forward      (canonical -> observation)
    warp_backward = deform_backward o P_t^-1  (observation -> canonical)

Observation space is the camera frame at time t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .geometry import (
    Camera,
    RigidTransform,
    quat_identity,
    quat_mul,
    rt_apply,
    rt_compose,
    rt_inverse,
)
from .params import ParameterStore
from .skinning import NeuralBone, SkinningModel, skinning_weights


def fibonacci_sphere(n: int) -> np.ndarray:
    """n roughly even directions on the unit sphere (golden-angle spiral)."""
    i = np.arange(n)
    golden = np.pi * (np.sqrt(5.0) - 1.0)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([np.cos(golden * i) * r, np.sin(golden * i) * r, z], axis=-1)


@dataclass
class WarpResult:
    point: object  # (..., 3)
    weights: object  # (..., B), probability vectors


class MotionSequence:
    """Learnable per-frame bone transforms and cameras over T frames, B bones.

    Bone transforms start at the rest transforms (identity rotation at
    Fibonacci-ball positions scaled by 0.5), so every dJ begins as identity.
    """

    def __init__(self, store: ParameterStore, n_frames: int, n_bones: int,
                 intrinsics, prefix: str = "motion",
                 init_cam_quats=None, init_cam_trans=None):
        if n_frames < 1:
            raise ValueError("need at least one frame")
        self.n_frames = n_frames
        self.n_bones = n_bones
        rest_trans = fibonacci_sphere(n_bones) * 0.5
        self.rest_quat = store.add_buffer(f"{prefix}.rest.quat", quat_identity((n_bones,)))
        self.rest_trans = store.add_buffer(f"{prefix}.rest.trans", rest_trans)
        self.bone_quats = store.add(
            "articulation", f"{prefix}.J.quat",
            np.tile(quat_identity(), (n_frames, n_bones, 1)), unit_quat=True)
        self.bone_trans = store.add(
            "articulation", f"{prefix}.J.trans",
            np.tile(rest_trans, (n_frames, 1, 1)))
        if init_cam_quats is None:
            init_cam_quats = np.tile(quat_identity(), (n_frames, 1))
        if init_cam_trans is None:
            init_cam_trans = np.zeros((n_frames, 3))
        self.cam_quats = store.add("camera", f"{prefix}.P.quat",
                                   init_cam_quats, unit_quat=True)
        self.cam_trans = store.add("camera", f"{prefix}.P.trans", init_cam_trans)
        # fx, fy, cx, cy, width, height
        self.intrinsics = store.add_buffer(f"{prefix}.intrinsics",
                                           np.asarray(intrinsics, dtype=np.float64))

    def _check_frame(self, t):
        t = int(t)
        if not 0 <= t < self.n_frames:
            raise IndexError(f"frame {t} outside [0, {self.n_frames})")
        return t

    def delta_transform(self, t):
        """dJ_{t,b} = J_{t,b} (J*_b)^{-1}; quats (B, 4), translations (B, 3)."""
        t = self._check_frame(t)
        inv_q, inv_t = rt_inverse(self.rest_quat, self.rest_trans)
        return rt_compose(self.bone_quats[t], self.bone_trans[t], inv_q, inv_t)

    def camera_pose(self, t) -> RigidTransform:
        t = self._check_frame(t)
        return RigidTransform(self.cam_quats[t], self.cam_trans[t])

    def camera(self, t) -> Camera:
        fx, fy, cx, cy, w, h = self.intrinsics
        return Camera(self.camera_pose(t), fx=fx, fy=fy, cx=cx, cy=cy,
                      width=int(w), height=int(h))


def posed_bones(seq: MotionSequence, skin: SkinningModel, t) -> list:
    """Bones carried to frame t: centers moved by dJ, orientations left-composed."""
    dq, dt = seq.delta_transform(t)
    centers = rt_apply(dq, dt, skin.centers)
    quats = quat_mul(dq, skin.quats)
    return [NeuralBone(centers[b], quats[b], skin.log_scales[b])
            for b in range(seq.n_bones)]


def deform_forward(seq: MotionSequence, skin: SkinningModel, v, t) -> WarpResult:
    """Blend dJ_{t,b} v with skinning weights at the canonical query v."""
    dq, dt = seq.delta_transform(t)
    w = skinning_weights(skin, v)
    per_bone = rt_apply(dq, dt, ad.expand_dims(v, -2))
    x = ad.sum_(ad.mul(ad.expand_dims(w, -1), per_bone), axis=-2)
    return WarpResult(x, w)


def deform_backward(seq: MotionSequence, skin: SkinningModel, w_pt, t) -> WarpResult:
    """Blend (dJ_{t,b})^{-1} w with weights at the posed bones of frame t."""
    dq, dt = seq.delta_transform(t)
    inv_q, inv_t = rt_inverse(dq, dt)
    w = skinning_weights(skin, w_pt, bones=posed_bones(seq, skin, t))
    per_bone = rt_apply(inv_q, inv_t, ad.expand_dims(w_pt, -2))
    v = ad.sum_(ad.mul(ad.expand_dims(w, -1), per_bone), axis=-2)
    return WarpResult(v, w)


def warp_forward(seq: MotionSequence, skin: SkinningModel, v, t):
    """Canonical point to the frame-t camera frame."""
    res = deform_forward(seq, skin, v, t)
    pose = seq.camera_pose(t)
    return rt_apply(pose.quat, pose.trans, res.point)


def warp_backward(seq: MotionSequence, skin: SkinningModel, w_pt, t):
    """Frame-t camera-frame point back to canonical space."""
    pose = seq.camera_pose(t)
    inv_q, inv_t = rt_inverse(pose.quat, pose.trans)
    return deform_backward(seq, skin, rt_apply(inv_q, inv_t, w_pt), t).point
