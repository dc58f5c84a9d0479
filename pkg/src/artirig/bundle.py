"""Articulated-bundle serialization: one self-describing JSON document.

The bundle is what a viewer needs to repose the reconstruction without the
training code: rest mesh, per-vertex skinning weights, bone rest state,
skeleton edges, and metadata.  Numeric payloads are base64 little-endian
f32 (u32 for indices), so a round trip is bitwise exact on the stored
precision.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import value
from .meshing import Skeleton, SkinnedMesh, TriangleMesh

FORMAT_VERSION = 1


class BundleFormatError(ValueError):
    """Malformed bundle file; the message names the offending field."""


@dataclass
class ArticulatedBundle:
    vertices: np.ndarray  # (N, 3) f32
    faces: np.ndarray  # (M, 3) u32
    weights: np.ndarray  # (N, B) f32
    dominant: np.ndarray  # (N,) u32
    bone_centers: np.ndarray  # (B, 3) f32
    bone_quats: np.ndarray  # (B, 4) f32, w first
    bone_log_scales: np.ndarray  # (B, 3) f32
    rest_quats: np.ndarray  # (B, 4) f32
    rest_trans: np.ndarray  # (B, 3) f32
    skeleton_edges: np.ndarray  # (E, 2) u32
    skeleton_counts: np.ndarray  # (E,) u32
    colors: np.ndarray | None = None  # (N, 3) f32
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f32 = lambda a: np.ascontiguousarray(a, dtype="<f4")
        u32 = lambda a: np.ascontiguousarray(a, dtype="<u4")
        self.vertices = f32(self.vertices).reshape(-1, 3)
        self.faces = u32(self.faces).reshape(-1, 3)
        self.weights = f32(self.weights)
        self.dominant = u32(self.dominant).reshape(-1)
        self.bone_centers = f32(self.bone_centers).reshape(-1, 3)
        self.bone_quats = f32(self.bone_quats).reshape(-1, 4)
        self.bone_log_scales = f32(self.bone_log_scales).reshape(-1, 3)
        self.rest_quats = f32(self.rest_quats).reshape(-1, 4)
        self.rest_trans = f32(self.rest_trans).reshape(-1, 3)
        self.skeleton_edges = u32(self.skeleton_edges).reshape(-1, 2)
        self.skeleton_counts = u32(self.skeleton_counts).reshape(-1)
        if self.colors is not None:
            self.colors = f32(self.colors).reshape(-1, 3)
        self._validate()

    def _validate(self):
        n, b = len(self.vertices), self.n_bones
        if self.weights.shape != (n, b):
            raise BundleFormatError(
                f"skinning.weights: expected shape ({n}, {b}), "
                f"got {self.weights.shape}")
        for name in ("bone_quats", "bone_log_scales", "rest_quats", "rest_trans"):
            if len(getattr(self, name)) != b:
                raise BundleFormatError(
                    f"bones: inconsistent bone count ({name} has "
                    f"{len(getattr(self, name))}, centers have {b})")
        if len(self.dominant) != n:
            raise BundleFormatError("skinning.dominant: one id per vertex required")
        if n and self.dominant.size and self.dominant.max() >= b:
            raise BundleFormatError("skinning.dominant: bone id out of range")
        if self.faces.size and self.faces.max() >= n:
            raise BundleFormatError("mesh.faces: vertex index out of range")
        if self.skeleton_edges.size and self.skeleton_edges.max() >= b:
            raise BundleFormatError("skeleton.edges: bone id out of range")
        if len(self.skeleton_edges) != len(self.skeleton_counts):
            raise BundleFormatError("skeleton.counts: one count per edge required")
        if self.colors is not None and len(self.colors) != n:
            raise BundleFormatError("mesh.colors: one color per vertex required")

    @property
    def n_bones(self) -> int:
        return len(self.bone_centers)


def build_bundle(skinned: SkinnedMesh, skin, seq, skeleton: Skeleton,
                 meta: dict | None = None) -> ArticulatedBundle:
    """Snapshot the fitted models into an exportable bundle."""
    return ArticulatedBundle(
        vertices=skinned.mesh.vertices,
        faces=skinned.mesh.faces,
        weights=skinned.weights,
        dominant=skinned.dominant,
        bone_centers=value(skin.centers),
        bone_quats=value(skin.quats),
        bone_log_scales=value(skin.log_scales),
        rest_quats=value(seq.rest_quat),
        rest_trans=value(seq.rest_trans),
        skeleton_edges=skeleton.edges,
        skeleton_counts=skeleton.counts,
        colors=skinned.mesh.colors,
        meta=dict(meta or {}),
    )


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(arr.tobytes()).decode("ascii")


def _unb64(payload, dtype, shape, path: str) -> np.ndarray:
    if not isinstance(payload, str):
        raise BundleFormatError(f"{path}: expected base64 string")
    try:
        raw = base64.b64decode(payload, validate=True)
    except Exception:
        raise BundleFormatError(f"{path}: invalid base64") from None
    arr = np.frombuffer(raw, dtype=dtype)
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise BundleFormatError(
            f"{path}: payload holds {arr.size} values, expected {expected}")
    return arr.reshape(shape).copy()


def _section(doc: dict, key: str, parent: str = "") -> dict:
    path = f"{parent}.{key}" if parent else key
    if key not in doc:
        raise BundleFormatError(f"{path}: missing section")
    if not isinstance(doc[key], dict):
        raise BundleFormatError(f"{path}: expected object")
    return doc[key]


def _field(sec: dict, key: str, path: str):
    if key not in sec:
        raise BundleFormatError(f"{path}.{key}: missing field")
    return sec[key]


def export_bundle(bundle: ArticulatedBundle, path):
    doc = {
        "format_version": FORMAT_VERSION,
        "mesh": {
            "n_vertices": len(bundle.vertices),
            "n_faces": len(bundle.faces),
            "vertices": _b64(bundle.vertices),
            "faces": _b64(bundle.faces),
            "colors": None if bundle.colors is None else _b64(bundle.colors),
        },
        "skinning": {
            "n_bones": bundle.n_bones,
            "weights": _b64(bundle.weights),
            "dominant": _b64(bundle.dominant),
        },
        "bones": {
            "centers": _b64(bundle.bone_centers),
            "quats": _b64(bundle.bone_quats),
            "log_scales": _b64(bundle.bone_log_scales),
        },
        "rest_transforms": {
            "quats": _b64(bundle.rest_quats),
            "trans": _b64(bundle.rest_trans),
        },
        "skeleton": {
            "edges": bundle.skeleton_edges.tolist(),
            "counts": bundle.skeleton_counts.tolist(),
        },
        "meta": bundle.meta,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def import_bundle(path) -> ArticulatedBundle:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise BundleFormatError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise BundleFormatError("top level: expected object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleFormatError(
            f"format_version: expected {FORMAT_VERSION}, got {version!r}")

    mesh = _section(doc, "mesh")
    skinning = _section(doc, "skinning")
    bones = _section(doc, "bones")
    rest = _section(doc, "rest_transforms")
    skel = _section(doc, "skeleton")

    n = _field(mesh, "n_vertices", "mesh")
    m = _field(mesh, "n_faces", "mesh")
    b = _field(skinning, "n_bones", "skinning")
    for label, val in (("mesh.n_vertices", n), ("mesh.n_faces", m),
                       ("skinning.n_bones", b)):
        if not isinstance(val, int) or val < 0:
            raise BundleFormatError(f"{label}: expected non-negative integer")

    colors_payload = _field(mesh, "colors", "mesh")
    edges = np.asarray(_field(skel, "edges", "skeleton"), dtype=np.int64).reshape(-1, 2)
    counts = np.asarray(_field(skel, "counts", "skeleton"), dtype=np.int64).reshape(-1)
    return ArticulatedBundle(
        vertices=_unb64(_field(mesh, "vertices", "mesh"), "<f4", (n, 3),
                        "mesh.vertices"),
        faces=_unb64(_field(mesh, "faces", "mesh"), "<u4", (m, 3), "mesh.faces"),
        weights=_unb64(_field(skinning, "weights", "skinning"), "<f4", (n, b),
                       "skinning.weights"),
        dominant=_unb64(_field(skinning, "dominant", "skinning"), "<u4", (n,),
                        "skinning.dominant"),
        bone_centers=_unb64(_field(bones, "centers", "bones"), "<f4", (b, 3),
                            "bones.centers"),
        bone_quats=_unb64(_field(bones, "quats", "bones"), "<f4", (b, 4),
                          "bones.quats"),
        bone_log_scales=_unb64(_field(bones, "log_scales", "bones"), "<f4", (b, 3),
                               "bones.log_scales"),
        rest_quats=_unb64(_field(rest, "quats", "rest_transforms"), "<f4", (b, 4),
                          "rest_transforms.quats"),
        rest_trans=_unb64(_field(rest, "trans", "rest_transforms"), "<f4", (b, 3),
                          "rest_transforms.trans"),
        skeleton_edges=edges,
        skeleton_counts=counts,
        colors=None if colors_payload is None
        else _unb64(colors_payload, "<f4", (n, 3), "mesh.colors"),
        meta=doc.get("meta", {}),
    )
