"""Rigid-transform and camera primitives.

Quaternions are stored w-first, shape (..., 4); points are (..., 3).  All
functions go through the autodiff dispatch layer, so they accept plain
ndarrays (returning ndarrays) or ``Tensor``s (recording gradients).  Unit
norm is maintained by construction: every consumer normalizes, and the
optimizer renormalizes quaternion parameters after each update, so the
double cover q ~ -q is the only ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ProjectionError(ValueError):
    """Point behind the camera (z <= eps after the pose transform)."""


def quat_identity(shape=()) -> np.ndarray:
    q = np.zeros(shape + (4,))
    q[..., 0] = 1.0
    return q


def quat_normalize(q):
    return q / ad.norm(q, axis=-1, keepdims=True)


def quat_conj(q):
    return ad.concatenate([q[..., :1], -q[..., 1:]], axis=-1) if isinstance(q, Tensor) \
        else np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def quat_mul(a, b):
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - ad.sum_(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + ad.cross(av, bv)
    return ad.concatenate([w, v], axis=-1)

def quat_rotate(q, v):
    """Rotate points v (..., 3) by unit quaternions q (..., 4), broadcasting."""
    w, u = q[..., :1], q[..., 1:]
    t = 2.0 * ad.cross(u, v)
    return v + w * t + ad.cross(u, t)


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix (..., 3, 3) from unit quaternions; plain numpy."""
    q = np.asarray(ad.value(q))
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    return np.concatenate(
        [np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1
    )


def random_unit_quat(rng: np.random.Generator, shape=()) -> np.ndarray:
    q = rng.normal(size=shape + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit w-first quaternion of one 3x3 rotation matrix (plain numpy)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                      (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                      0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    return q / np.linalg.norm(q)


def look_at_pose(position, target=(0.0, 0.0, 0.0), up=(0.0, -1.0, 0.0)) -> "RigidTransform":
    """World-to-camera pose for a camera at `position` aimed at `target`.

    Camera axes: x right, y down in the image, z forward.  The default up
    vector is -y (image rows grow along world +y), so a camera sitting on
    the -z axis gets the identity rotation.
    """
    position = np.asarray(position, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - position
    fn = np.linalg.norm(f)
    if fn < 1e-12:
        raise ValueError("camera position coincides with the look-at target")
    f = f / fn
    down = -np.asarray(up, dtype=np.float64)
    x = np.cross(down, f)
    xn = np.linalg.norm(x)
    if xn < 1e-9:
        raise ValueError("view direction parallel to the up vector")
    x = x / xn
    d = np.cross(f, x)
    rot = np.stack([x, d, f])  # rows: world axes of camera x, y, z
    q = quat_from_matrix(rot)
    return RigidTransform(q, -quat_rotate(q, position))


def rotation_angle(q1, q2):
    """Relative angle in [0, pi] between two rotations.

    Uses cos(theta) = 2 <q1, q2>^2 - 1, the quaternion form of
    arccos((tr(R1 R2^T) - 1) / 2); the arccos argument is clipped to [-1, 1].
    """
    q1 = quat_normalize(q1)
    q2 = quat_normalize(q2)
    d = ad.sum_(q1 * q2, axis=-1)
    return ad.arccos_safe(2.0 * d * d - 1.0)


# -- rigid transforms ---------------------------------------------------------


def rt_apply(q, t, x):
    """Apply rotation q then translation t to points x; broadcasts."""
    return quat_rotate(quat_normalize(q), x) + t


def rt_compose(qa, ta, qb, tb):
    """(a o b): first b, then a. Returns (q, t)."""
    qa = quat_normalize(qa)
    qb = quat_normalize(qb)
    return quat_mul(qa, qb), quat_rotate(qa, tb) + ta


def rt_inverse(q, t):
    q = quat_normalize(q)
    qc = quat_conj(q)
    return qc, -quat_rotate(qc, t)


@dataclass
class RigidTransform:
    """Rotation-then-translation map; fields may be ndarrays or Tensors.

    Supports leading batch dimensions: quat (..., 4), trans (..., 3).
    """

    quat: object
    trans: object

    @staticmethod
    def identity(shape=()) -> "RigidTransform":
        return RigidTransform(quat_identity(shape), np.zeros(shape + (3,)))

    @staticmethod
    def from_axis_angle(axis, angle, trans=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(quat_from_axis_angle(axis, angle), np.asarray(trans, dtype=np.float64))

    def apply(self, x):
        return rt_apply(self.quat, self.trans, x)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        q, t = rt_compose(self.quat, self.trans, other.quat, other.trans)
        return RigidTransform(q, t)

    def inverse(self) -> "RigidTransform":
        q, t = rt_inverse(self.quat, self.trans)
        return RigidTransform(q, t)

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix (plain numpy; non-batched)."""
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(quat_normalize(ad.value(self.quat)))
        m[:3, 3] = ad.value(self.trans)
        return m

    def numpy(self) -> "RigidTransform":
        return RigidTransform(ad.value(self.quat), ad.value(self.trans))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


# -- cameras ------------------------------------------------------------------


@dataclass
class Camera:
    """Pinhole camera: world-to-camera pose plus intrinsics in pixels."""

    pose: RigidTransform
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        inv = self.pose.numpy().inverse()
        return np.asarray(inv.trans)

    def project(self, p, eps: float = 1e-8):
        """Pixel coordinates (..., 2) of world points.

        Raises ProjectionError if any point lands at z <= eps in the camera
        frame; use `project_clamped` on differentiable paths that must stay
        total.
        """
        pc = self.pose.apply(p)
        z = ad.value(pc)[..., 2]
        if np.any(z <= eps):
            raise ProjectionError(f"point behind camera (min z = {z.min():.3g})")
        return self._pinhole(pc)

    def project_clamped(self, p, eps: float = 1e-4):
        """Total, differentiable projection: z is clamped to >= eps.

        Returns (uv, in_front) where in_front is a plain boolean mask of the
        points that were genuinely in front of the camera.
        """
        pc = self.pose.apply(p)
        in_front = ad.value(pc)[..., 2] > eps
        xy = pc[..., :2]
        z = ad.maximum(pc[..., 2:3], eps)
        uv = xy / z
        fxy = np.array([self.fx, self.fy])
        cxy = np.array([self.cx, self.cy])
        return uv * fxy + cxy, in_front

    def _pinhole(self, pc):
        xy = pc[..., :2]
        z = pc[..., 2:3]
        fxy = np.array([self.fx, self.fy])
        cxy = np.array([self.cx, self.cy])
        return xy / z * fxy + cxy

    def pixel_direction(self, uv) -> np.ndarray:
        """Unit ray direction in the camera frame through continuous pixel uv."""
        uv = np.asarray(uv, dtype=np.float64)
        d = np.stack(
            [
                (uv[..., 0] - self.cx) / self.fx,
                (uv[..., 1] - self.cy) / self.fy,
                np.ones_like(uv[..., 0]),
            ],
            axis=-1,
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def numpy(self) -> "Camera":
        return Camera(self.pose.numpy(), self.fx, self.fy, self.cx, self.cy, self.width, self.height)
