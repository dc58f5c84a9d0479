"""Canonical-space implicit model: SDF, color, and feature heads.

Two interchangeable realizations of the same sampling interface:

  * analytic primitives (sphere, capsule, axis-aligned box, smooth union)
    with a fixed procedural color/feature function, used for synthetic data
    and as oracles in tests;
  * a trainable coordinate network (per-head positional encodings, softplus
    MLPs) whose gradients flow through the autodiff tape.

Density is derived from the signed distance through the Laplace-CDF map
sigma = (1/beta) * Psi_beta(-delta) with a learnable scale beta, stored as
log beta so positivity needs no projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import value
from .params import ParameterStore


@dataclass
class FieldSample:
    """One field evaluation: color in [0,1]^3, signed distance, density, feature."""

    color: object
    sdf: object
    density: object
    feature: object


def positional_encode(x, L: int):
    """Frequency encoding [x, sin(2^k pi x), cos(2^k pi x)]_{k<L}, length 3+6L.

    Raw coordinates pass through in the first three slots; works on any
    (..., 3) batch and on tape tensors.
    """
    if L < 0:
        raise ValueError("frequency count must be >= 0")
    parts = [x]
    for k in range(L):
        xk = ad.mul(x, float(2**k) * np.pi)
        parts.append(ad.sin(xk))
        parts.append(ad.cos(xk))
    return ad.concatenate(parts, axis=-1) if len(parts) > 1 else ad.reshape(x, value(x).shape)


@dataclass
class LaplaceDensityParams:
    """Density scale beta > 0, optimized as log beta."""

    log_beta: object  # scalar Tensor or float

    @staticmethod
    def from_beta(beta: float) -> "LaplaceDensityParams":
        if beta <= 0:
            raise ValueError("beta must be positive")
        return LaplaceDensityParams(float(np.log(beta)))

    @property
    def beta(self):
        return ad.exp(self.log_beta)


def sdf_to_density(delta, params: LaplaceDensityParams):
    """sigma = (1/beta) * Psi_beta(-delta), Psi the zero-mean Laplace CDF.

    Each branch sees a one-sided clamped argument so neither exp overflows;
    the map is C1 and the tape gradient at delta = 0 is the true -1/(2 beta^2).
    """
    beta = params.beta
    outside = ad.mul(0.5, ad.exp(ad.div(ad.mul(ad.maximum(delta, 0.0), -1.0), beta)))
    inside = ad.sub(1.0, ad.mul(0.5, ad.exp(ad.div(ad.minimum(delta, 0.0), beta))))
    psi = ad.where(value(delta) >= 0.0, outside, inside)
    return ad.div(psi, beta)


# -- procedural appearance for analytic shapes ------------------------------

# fixed mixing matrices; any smooth deterministic function of position works
_COLOR_A = np.array(
    [[1.7, 0.3, -0.9], [-0.5, 2.1, 0.4], [0.8, -1.3, 1.6]]
)
_COLOR_PHASE = np.array([0.0, 1.3, 2.6])


def procedural_color(x):
    """Smooth position-dependent RGB in [0,1]^3."""
    proj = ad.matmul(ad.reshape(x, (-1, 3)), _COLOR_A.T)
    c = ad.add(0.5, ad.mul(0.5, ad.sin(ad.add(proj, _COLOR_PHASE))))
    return ad.reshape(c, value(x).shape)


def procedural_feature(x, dim: int = 16):
    rng = np.random.default_rng(1234)
    B = rng.normal(size=(dim, 3))
    proj = ad.matmul(ad.reshape(x, (-1, 3)), B.T)
    f = ad.sin(proj)
    return ad.reshape(f, value(x).shape[:-1] + (dim,))


# -- analytic primitives -----------------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    def sdf(self, x):
        d = ad.sub(x, np.asarray(self.center, dtype=np.float64))
        return ad.sub(ad.norm(d, axis=-1), self.radius)


@dataclass(frozen=True)
class Capsule:
    a: tuple
    b: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")
        if np.allclose(self.a, self.b):
            raise ValueError("capsule endpoints must be distinct")

    def sdf(self, x):
        a = np.asarray(self.a, dtype=np.float64)
        ba = np.asarray(self.b, dtype=np.float64) - a
        pa = ad.sub(x, a)
        h = ad.clip(ad.div(ad.sum_(ad.mul(pa, ba), axis=-1), float(ba @ ba)), 0.0, 1.0)
        closest = ad.mul(ad.expand_dims(h, -1), ba)
        return ad.sub(ad.norm(ad.sub(pa, closest), axis=-1), self.radius)


@dataclass(frozen=True)
class Box:
    center: tuple
    half_extents: tuple

    def __post_init__(self):
        if np.any(np.asarray(self.half_extents) <= 0):
            raise ValueError("box half extents must be positive")

    def sdf(self, x):
        q = ad.sub(
            ad.absolute(ad.sub(x, np.asarray(self.center, dtype=np.float64))),
            np.asarray(self.half_extents, dtype=np.float64),
        )
        outside = ad.norm(ad.maximum(q, 0.0), axis=-1)
        qx, qy, qz = (ad.getitem(q, (..., i)) for i in range(3))
        inside = ad.minimum(ad.maximum(qx, ad.maximum(qy, qz)), 0.0)
        return ad.add(outside, inside)


@dataclass(frozen=True)
class SmoothUnion:
    """Exponential smooth-min blend of child shapes with smoothing k > 0."""

    shapes: tuple
    k: float = 0.1

    def __post_init__(self):
        if len(self.shapes) < 1:
            raise ValueError("smooth union needs at least one shape")
        if self.k <= 0:
            raise ValueError("smoothing parameter must be positive")

    def sdf(self, x):
        ds = [s.sdf(x) for s in self.shapes]
        m = ds[0]
        for d in ds[1:]:
            m = ad.minimum(m, d)
        # delta = m - k*log(sum exp((m - d_i)/k)); exponents <= 0, stable
        acc = None
        for d in ds:
            term = ad.exp(ad.div(ad.sub(m, d), self.k))
            acc = term if acc is None else ad.add(acc, term)
        return ad.sub(m, ad.mul(self.k, ad.log(acc)))


@dataclass
class AnalyticField:
    """Exact-SDF field with procedural appearance, for oracles and synthesis."""

    shape: object
    beta: float = 0.01
    feature_dim: int = 16

    def sdf(self, x):
        return self.shape.sdf(x)

    def density(self, x):
        return sdf_to_density(self.sdf(x), LaplaceDensityParams.from_beta(self.beta))

    def sample(self, x) -> FieldSample:
        delta = self.sdf(x)
        return FieldSample(
            color=procedural_color(x),
            sdf=delta,
            density=sdf_to_density(delta, LaplaceDensityParams.from_beta(self.beta)),
            feature=procedural_feature(x, self.feature_dim),
        )


# -- trainable coordinate network --------------------------------------------


class MLP:
    """Fully connected stack, softplus hiddens, one input skip mid-network."""

    def __init__(self, store: ParameterStore, prefix: str, in_dim: int, width: int,
                 depth: int, out_dim: int, rng, skip: bool = True,
                 group: str = "canonical"):
        self.skip_at = depth // 2 if (skip and depth >= 2) else -1
        dims_in = [in_dim] + [width] * depth
        dims_out = [width] * depth + [out_dim]
        if self.skip_at >= 0:
            dims_in[self.skip_at] += in_dim
        self.layers = []
        for i, (din, dout) in enumerate(zip(dims_in, dims_out)):
            w = store.add(group, f"{prefix}.w{i}",
                          rng.normal(size=(din, dout)) / np.sqrt(din))
            b = store.add(group, f"{prefix}.b{i}", np.zeros(dout))
            self.layers.append((w, b))

    def __call__(self, h0):
        h = h0
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            if i == self.skip_at:
                h = ad.concatenate([h, h0], axis=-1)
            h = ad.add(ad.matmul(h, w), b)
            if i < last:
                h = ad.softplus(h)
        return h


@dataclass
class FieldConfig:
    width: int = 64
    depth: int = 5
    L_sdf: int = 6
    L_color: int = 8
    L_feature: int = 6
    feature_dim: int = 16
    skip: bool = True
    sdf_bias: float = 0.0  # initial constant offset of the SDF head


class NetworkField:
    """Coordinate network M: three softplus MLP heads over per-head encodings.

    SDF head is linear, color squashed into [0,1] by a sigmoid, feature
    linear; density comes from the shared learnable Laplace scale.
    """

    def __init__(self, store: ParameterStore, cfg: FieldConfig | None = None,
                 seed: int = 0, prefix: str = "field"):
        self.cfg = cfg = cfg or FieldConfig()
        rng = np.random.default_rng(seed)
        self.net_sdf = MLP(store, f"{prefix}.sdf", 3 + 6 * cfg.L_sdf,
                           cfg.width, cfg.depth, 1, rng, cfg.skip)
        self.net_color = MLP(store, f"{prefix}.color", 3 + 6 * cfg.L_color,
                             cfg.width, cfg.depth, 3, rng, cfg.skip)
        self.net_feature = MLP(store, f"{prefix}.feature", 3 + 6 * cfg.L_feature,
                               cfg.width, cfg.depth, cfg.feature_dim, rng, cfg.skip)
        if cfg.sdf_bias:
            bias = self.net_sdf.layers[-1][1]
            bias.data[...] = cfg.sdf_bias
        self.log_beta = store.add("canonical", f"{prefix}.log_beta", np.log(0.1))

    @property
    def density_params(self) -> LaplaceDensityParams:
        return LaplaceDensityParams(self.log_beta)

    def _flat(self, x):
        lead = value(x).shape[:-1]
        return ad.reshape(x, (-1, 3)), lead

    def sdf(self, x):
        flat, lead = self._flat(x)
        out = self.net_sdf(positional_encode(flat, self.cfg.L_sdf))
        return ad.reshape(out, lead)

    def color(self, x):
        flat, lead = self._flat(x)
        out = ad.sigmoid(self.net_color(positional_encode(flat, self.cfg.L_color)))
        return ad.reshape(out, lead + (3,))

    def feature(self, x):
        flat, lead = self._flat(x)
        out = self.net_feature(positional_encode(flat, self.cfg.L_feature))
        return ad.reshape(out, lead + (self.cfg.feature_dim,))

    def density(self, x):
        return sdf_to_density(self.sdf(x), self.density_params)

    def sample(self, x) -> FieldSample:
        delta = self.sdf(x)
        return FieldSample(
            color=self.color(x),
            sdf=delta,
            density=sdf_to_density(delta, self.density_params),
            feature=self.feature(x),
        )
