"""Gaussian-ellipsoid bones and Mahalanobis skinning weights.

Each bone is an oriented ellipsoid (center mu, unit quaternion, per-axis log
scales).  A query point's squared Mahalanobis distance to every bone, pushed
through a temperature softmax, gives its skinning weight vector.  An optional
small coordinate network adds per-bone logit corrections ("delta skinning").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value
from .fields import MLP, positional_encode
from .geometry import quat_conj, quat_identity, quat_normalize, quat_rotate
from .params import ParameterStore

MIN_SCALE = 1e-3


@dataclass
class NeuralBone:
    """One ellipsoid: center (3,), w-first unit quat (4,), log_scales (3,).

    Fields may be Tensor views into stacked parameters; math stays on-tape.
    """

    center: object
    quat: object
    log_scales: object

    def scales(self):
        return ad.maximum(ad.exp(self.log_scales), MIN_SCALE)


def mahalanobis_sq(bone: NeuralBone, x):
    """(x-mu)^T Sigma^{-1} (x-mu) with Sigma^{-1} = R diag(s^-2) R^T.

    The quaternion maps bone-local axes into canonical space, so local
    coordinates are conj(q)-rotations of the offset.  Broadcasts over any
    leading batch shape of x.
    """
    q = quat_normalize(bone.quat)
    local = quat_rotate(quat_conj(q), ad.sub(x, bone.center))
    z = ad.div(local, bone.scales())
    return ad.sum_(ad.mul(z, z), axis=-1)


class SkinningModel:
    """B bones plus softmax weighting; parameters live in "articulation"."""

    def __init__(self, store: ParameterStore, n_bones: int, temperature: float = 0.1,
                 delta_net: bool = False, delta_L: int = 2, seed: int = 0,
                 prefix: str = "bones", init_centers=None):
        if n_bones < 1:
            raise ValueError("need at least one bone")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.n_bones = n_bones
        self.temperature = temperature
        rng = np.random.default_rng(seed)
        if init_centers is None:
            init_centers = rng.uniform(-0.5, 0.5, size=(n_bones, 3))
        self.centers = store.add("articulation", f"{prefix}.center",
                                 np.asarray(init_centers, dtype=np.float64))
        self.quats = store.add("articulation", f"{prefix}.quat",
                               quat_identity((n_bones,)), unit_quat=True)
        self.log_scales = store.add("articulation", f"{prefix}.log_scales",
                                    np.full((n_bones, 3), np.log(0.3)))
        self.delta_net = None
        if delta_net:
            self.delta_L = delta_L
            self.delta_net = MLP(store, f"{prefix}.delta", 3 + 6 * delta_L,
                                 16, 2, n_bones, rng, group="articulation")

    def bone(self, b: int) -> NeuralBone:
        return NeuralBone(self.centers[b], self.quats[b], self.log_scales[b])

    @property
    def bones(self):
        return [self.bone(b) for b in range(self.n_bones)]

    def distances(self, x):
        """Squared Mahalanobis distance to every bone, shape (..., B)."""
        return ad.stack([mahalanobis_sq(self.bone(b), x) for b in range(self.n_bones)],
                        axis=-1)

    def logits(self, x):
        out = ad.div(self.distances(x), -self.temperature)
        if self.delta_net is not None:
            out = ad.add(out, self.delta_net(positional_encode(x, self.delta_L)))
        return out


def skinning_weights(model: SkinningModel, x, bones=None):
    """Probability vector over bones for each query point, shape (..., B).

    `bones` substitutes an alternative bone list (e.g. posed bones) while
    keeping the model's temperature and delta correction.
    """
    if bones is None:
        logits = model.logits(x)
    else:
        d = ad.stack([mahalanobis_sq(b, x) for b in bones], axis=-1)
        logits = ad.div(d, -model.temperature)
        if model.delta_net is not None:
            logits = ad.add(logits, model.delta_net(positional_encode(x, model.delta_L)))
    return ad.softmax(logits, axis=-1)


def dominant_bone(model: SkinningModel, x) -> np.ndarray:
    """Index of the heaviest-weighted bone; the first wins exact ties."""
    w = value(skinning_weights(model, x))
    return np.argmax(w, axis=-1)
