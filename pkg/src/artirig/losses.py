"""Training objectives: per-term losses, the weighted total, and the
distillation-gradient hook.

Every loss accepts tape tensors anywhere a gradient should flow and returns
a scalar tape tensor (or a plain float where the value is identically
constant, e.g. a smoothness loss over a single frame).  The distillation
hook `sds_step` bypasses the tape: it seeds a backward pass with an
externally supplied gradient image and masks the result to the articulation
parameter group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, value
from .geometry import Camera, look_at_pose, rotation_angle, rt_apply, rt_inverse
from .params import ParameterStore
from .warping import MotionSequence, deform_backward, deform_forward


class PriorError(RuntimeError):
    """A gradient prior failed for this step; the step is skippable."""


@dataclass
class LossWeights:
    w_recon: float = 1e-1
    w_sds: float = 1e-4
    w_cyc: float = 1e-2
    w_ncyc: float = 1.0
    w_surf: float = 1e-1
    w_smooth: float = 1e-2

    def __post_init__(self):
        for name in ("w_recon", "w_sds", "w_cyc", "w_ncyc", "w_surf", "w_smooth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class LossBreakdown:
    """Scalar value of each term plus the weighted total.

    `objective` is the tape scalar for the weighted sum of the tape-tracked
    terms; the sds term contributes to `total` but reaches parameters
    through `sds_step`'s seeded backward pass, not through this node.
    """

    recon: float = 0.0
    cyc: float = 0.0
    ncyc: float = 0.0
    surf: float = 0.0
    smooth: float = 0.0
    sds: float = 0.0
    total: float = 0.0
    objective: Tensor | None = field(default=None, repr=False, compare=False)

    TERMS = ("recon", "cyc", "ncyc", "surf", "smooth", "sds")

    def trace_record(self, step: int) -> dict:
        rec = {"step": step}
        for name in self.TERMS + ("total",):
            rec[name] = float(getattr(self, name))
        return rec


def combine_losses(weights: LossWeights, *, recon=None, cyc=None, ncyc=None,
                   surf=None, smooth=None, sds: float = 0.0) -> LossBreakdown:
    """Fold per-term scalars into a LossBreakdown.

    Terms may be tape tensors, plain floats, or None (term inactive this
    step, recorded as 0).  total = sum of w_k * term_k over all six terms.
    """
    pairs = [("recon", weights.w_recon, recon), ("cyc", weights.w_cyc, cyc),
             ("ncyc", weights.w_ncyc, ncyc), ("surf", weights.w_surf, surf),
             ("smooth", weights.w_smooth, smooth)]
    br = LossBreakdown(sds=float(sds))
    objective = None
    total = weights.w_sds * float(sds)
    for name, w, term in pairs:
        if term is None:
            continue
        setattr(br, name, float(value(term)))
        total += w * float(value(term))
        weighted = term * w if isinstance(term, Tensor) else w * float(term)
        objective = weighted if objective is None else objective + weighted
    br.total = total
    br.objective = objective if isinstance(objective, Tensor) else None
    return br


# -- reconstruction -----------------------------------------------------------


@dataclass
class PixelBatch:
    """Per-pixel channels for N samples: color (N,3), opacity (N,), optional
    feature (N,D) and flow (N,2).  Arrays or tape tensors."""

    color: object
    opacity: object
    feature: object = None
    flow: object = None

    def __post_init__(self):
        n = value(self.color).shape[0]
        if value(self.color).shape != (n, 3):
            raise ValueError(f"color must be (N, 3), got {value(self.color).shape}")
        if value(self.opacity).shape != (n,):
            raise ValueError(f"opacity must be (N,), got {value(self.opacity).shape}")
        if self.feature is not None and (value(self.feature).ndim != 2
                                         or value(self.feature).shape[0] != n):
            raise ValueError("feature must be (N, D)")
        if self.flow is not None and value(self.flow).shape != (n, 2):
            raise ValueError(f"flow must be (N, 2), got {value(self.flow).shape}")


def _channel_norm(a, b, label: str):
    if value(a).shape != value(b).shape:
        raise ValueError(f"{label} channel mismatch: render {value(a).shape} "
                         f"vs observation {value(b).shape}")
    return ad.norm(a - b, axis=-1)


def loss_recon(render: PixelBatch, observed: PixelBatch):
    """Mean over the batch of per-pixel L2 error norms.

    Per pixel: |color|_2 + |opacity| + |feature|_2 + |flow|_2, each norm over
    that channel's components.  Feature and flow terms are skipped when both
    sides omit them; one-sided omission is a channel mismatch.
    """
    per = _channel_norm(render.color, observed.color, "color")
    per = per + ad.absolute(render.opacity - observed.opacity)
    for name in ("feature", "flow"):
        r, o = getattr(render, name), getattr(observed, name)
        if (r is None) != (o is None):
            raise ValueError(f"{name} channel mismatch: present on one side only")
        if r is not None:
            per = per + _channel_norm(r, o, name)
    return ad.mean(per)


# -- warp-consistency ---------------------------------------------------------


def _cycle_residual(seq: MotionSequence, skin, t: int, points, tau, cam_pose):
    """tau-weighted round-trip error sum per ray, then mean over rays.

    points (..., S, 3) are samples w_i in the frame of the camera whose rays
    produced them; the residual is ||w_i - F(G(w_i, t), t)|| with G the
    backward and F the forward warp through that camera.
    """
    pose = cam_pose if cam_pose is not None else seq.camera_pose(t)
    inv_q, inv_t = rt_inverse(pose.quat, pose.trans)
    canonical = deform_backward(seq, skin, rt_apply(inv_q, inv_t, points), t).point
    back = rt_apply(pose.quat, pose.trans,
                    deform_forward(seq, skin, canonical, t).point)
    residual = ad.norm(points - back, axis=-1)
    per_ray = ad.sum_(tau * residual, axis=-1)
    if value(per_ray).ndim == 0:
        return per_ray
    return ad.mean(ad.reshape(per_ray, (-1,)))


def loss_cycle(seq: MotionSequence, skin, t: int, points, tau):
    """Warp round-trip consistency on training-view ray samples."""
    return _cycle_residual(seq, skin, t, points, tau, None)


def loss_cycle_novel(seq: MotionSequence, skin, t: int, points, tau,
                     cam_pose=None):
    """Warp round-trip consistency on novel-view ray samples.

    Same functional form as `loss_cycle` but the rays belong to a sampled
    novel camera, passed as `cam_pose`; the two terms are also weighted and
    scheduled independently.
    """
    return _cycle_residual(seq, skin, t, points, tau, cam_pose)


# -- bone placement -----------------------------------------------------------


def loss_surface(delta):
    """L2 norm of the positive part of the bone-center SDF values."""
    d = ad.reshape(delta, (-1,)) if isinstance(delta, Tensor) \
        else np.reshape(delta, -1)
    return ad.norm(ad.relu(d), axis=-1)


def surface_penalty(field, skin):
    """`loss_surface` of the canonical SDF evaluated at the bone centers."""
    return loss_surface(field.sdf(skin.centers))


# -- temporal smoothness ------------------------------------------------------


def loss_smooth(seq: MotionSequence):
    """Mean over bones and transitions of angle step plus translation step.

    Sequences with fewer than two frames have no transitions and score 0.
    """
    if seq.n_frames < 2:
        return 0.0
    q, tr = seq.bone_quats, seq.bone_trans
    ang = rotation_angle(q[:-1], q[1:])
    step = ad.norm(tr[1:] - tr[:-1], axis=-1)
    return ad.mean(ang + step)


# -- distillation hook --------------------------------------------------------


class PriorGradientSource:
    """Scores a rendered novel view, returning a gradient image.

    Implementations return an array with the render's shape; raising
    PriorError marks the step skippable.  The two built-ins below are
    enough to exercise the plumbing; a diffusion-model adapter would slot
    in here.
    """

    def gradient_image(self, render: np.ndarray, azimuth: float,
                       elevation: float, radius: float) -> np.ndarray:
        raise NotImplementedError


class ZeroPrior(PriorGradientSource):
    def gradient_image(self, render, azimuth, elevation, radius):
        return np.zeros_like(render)


class MockL2Prior(PriorGradientSource):
    """Gradient toward a fixed target image: g = render - target.

    This is the gradient of 0.5 * ||render - target||^2, so a seeded
    backward pass through it must match direct backprop of that loss.
    """

    def __init__(self, target):
        self.target = np.asarray(target, dtype=np.float64)

    def gradient_image(self, render, azimuth, elevation, radius):
        if render.shape != self.target.shape:
            raise PriorError(f"target shape {self.target.shape} does not "
                             f"match render {render.shape}")
        return render - self.target


@dataclass
class NovelView:
    """A sampled relative viewpoint: camera plus its spherical coordinates."""

    camera: Camera
    azimuth: float
    elevation: float
    radius: float


AZIMUTH_RANGE = (np.deg2rad(-90.0), np.deg2rad(90.0))
ELEVATION_RANGE = (np.deg2rad(-10.0), np.deg2rad(45.0))


def sample_novel_camera(ref: Camera, rng: np.random.Generator,
                        radius: float | None = None) -> NovelView:
    """Random viewpoint around the origin within the distillation ranges.

    Azimuth is uniform in [-90, 90] degrees and elevation in [-10, 45],
    measured relative to the reference direction (azimuth 0, elevation 0
    reproduces a camera on the -z axis).  Intrinsics are copied from `ref`;
    radius defaults to the reference camera's distance from the origin.
    """
    if radius is None:
        radius = float(np.linalg.norm(ref.center()))
    az = rng.uniform(*AZIMUTH_RANGE)
    el = rng.uniform(*ELEVATION_RANGE)
    pos = radius * np.array([np.sin(az) * np.cos(el), np.sin(el),
                             -np.cos(az) * np.cos(el)])
    pose = look_at_pose(pos)
    cam = Camera(pose, ref.fx, ref.fy, ref.cx, ref.cy, ref.width, ref.height)
    return NovelView(cam, float(az), float(el), float(radius))


@dataclass
class SDSResult:
    """proxy = sum(g * render), the scalar whose gradient equals the applied
    contribution at weight 1; grads holds the per-parameter contribution for
    the articulation group (all other groups receive exact zeros)."""

    proxy: float
    grads: dict


def sds_step(prior: PriorGradientSource, render: Tensor, view: NovelView,
             store: ParameterStore, weight: float = 1.0) -> SDSResult:
    """Apply a prior's gradient image to the articulation parameters.

    Seeds a backward pass through `render` with weight * g where g is the
    prior's gradient image, then masks the resulting parameter gradients so
    only the articulation group keeps a contribution.  Gradients already on
    the store are preserved and the masked contribution is added on top;
    canonical and camera parameters come out with exactly the gradient they
    had (exact zeros if they had none).
    """
    img = value(render)
    g = np.asarray(prior.gradient_image(img, view.azimuth, view.elevation,
                                        view.radius), dtype=np.float64)
    if g.shape != img.shape:
        raise ValueError(f"prior gradient shape {g.shape} does not match "
                         f"render {img.shape}")
    proxy = float(np.sum(g * img))

    saved = {name: store.tensor(name).grad for name in store.names()}
    store.zero_grads()
    render.backward(grad=weight * g)

    contributions = {}
    for name in store.names():
        p = store.tensor(name)
        raw = p.grad
        if store.group_of(name) == "articulation":
            contrib = np.zeros_like(p.data) if raw is None else raw
            contributions[name] = contrib
        else:
            contrib = np.zeros_like(p.data)
        prev = saved[name]
        p.grad = contrib if prev is None else prev + contrib
    return SDSResult(proxy=proxy, grads=contributions)
