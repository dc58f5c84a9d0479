"""Gaussian neural bones, skinning weights, and the two space warps.

Each bone is an ellipsoid (center, orientation, per-axis scales). A point's
skinning weights are the softmax of its negated squared Mahalanobis
distances to the bones, so weights sum to one and fall off smoothly with
distance. Blending per-bone rigid transforms with those weights gives the
forward warp (canonical -> frame t); the backward warp blends the inverse
transforms with weights evaluated in the deformed frame. The two maps are
independently parameterized, so their composition is only approximately the
identity away from B=1; training ties them together with cycle losses.
"""
import numpy as np

from artirig.autodiff import no_grad, value
from artirig.geometry import quat_from_axis_angle
from artirig.params import ParameterStore
from artirig.skinning import SkinningModel, skinning_weights, dominant_bone
from artirig.warping import MotionSequence, warp_backward, warp_forward

store = ParameterStore()
skin = SkinningModel(store, n_bones=2,
                     init_centers=np.array([[-0.3, 0.0, 0.0],
                                            [0.3, 0.0, 0.0]]))

xs = np.linspace(-0.8, 0.8, 9)
pts = np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=-1)
with no_grad():
    w = value(skinning_weights(skin, pts))
print("weights along the x axis (bone 0 at x=-0.3, bone 1 at x=+0.3):")
for x, row in zip(xs, w):
    bar = "#" * int(round(20 * row[0]))
    print(f"x={x:+.2f}  w0={row[0]:.3f} w1={row[1]:.3f}  {bar:<20} "
          f"dominant={int(row.argmax())}")
print("row sums:", np.round(w.sum(axis=1), 12))
print("dominant flips sides at x=0:",
      dominant_bone(skin, pts).tolist())

# a one-frame motion: rotate bone 1 by 30 degrees about z
intr = (50.0, 50.0, 16.0, 16.0, 32, 32)
seq = MotionSequence(store, n_frames=1, n_bones=2, intrinsics=intr)
with no_grad():
    seq.bone_quats.data[0, 1] = quat_from_axis_angle(
        np.array([0.0, 0.0, 1.0]), np.pi / 6)

rng = np.random.default_rng(0)
v = rng.uniform(-0.6, 0.6, size=(1000, 3))
with no_grad():
    w_pts = value(warp_forward(seq, skin, v, 0))
    back = value(warp_backward(seq, skin, w_pts, 0))
err = np.linalg.norm(back - v, axis=-1)
print(f"\nforward->backward cycle over 1000 points: "
      f"mean {err.mean():.2e}, max {err.max():.2e}")
print("(nonzero because the two warps blend weights in different spaces; "
      "the cycle losses push this toward zero during fitting)")

# with a single bone the blend collapses to one rigid transform: exact inverse
store1 = ParameterStore()
skin1 = SkinningModel(store1, n_bones=1)
seq1 = MotionSequence(store1, n_frames=1, n_bones=1, intrinsics=intr)
with no_grad():
    seq1.bone_quats.data[0, 0] = quat_from_axis_angle(
        np.array([0.0, 1.0, 0.0]), 0.8)
    seq1.bone_trans.data[0, 0] = (0.1, -0.2, 0.05)
    back1 = value(warp_backward(seq1, skin1,
                                value(warp_forward(seq1, skin1, v, 0)), 0))
print(f"single-bone cycle max error: "
      f"{np.abs(back1 - v).max():.2e} (rigid, exactly invertible)")
