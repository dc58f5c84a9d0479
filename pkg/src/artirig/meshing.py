"""Rest-pose surface extraction and articulation-ready mesh machinery.

Marching cubes runs on a dense SDF grid (scikit-image does the table
lookup), vertices get skinning weights from the bone model, bone adjacency
is counted over mesh edges whose endpoints answer to different bones, and
posing blends per-bone rigid transforms with the stored weights.  All of it
is plain numpy on detached values; nothing here participates in gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .autodiff import no_grad, value
from .geometry import rt_apply
from .skinning import SkinningModel, skinning_weights
from .warping import MotionSequence


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (N, 3)
    faces: np.ndarray  # (M, 3) int
    colors: np.ndarray | None = None  # (N, 3) in [0, 1]

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise ValueError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2])
                      | (f[:, 0] == f[:, 2])):
                raise ValueError("degenerate face (repeated vertex index)")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != n:
                raise ValueError("need one color per vertex")

    def is_empty(self) -> bool:
        return len(self.vertices) == 0


def _grid_axes(resolution, bounds):
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (3,))
    if np.any(res < 2):
        raise ValueError("resolution must be >= 2 per axis")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if np.any(hi <= lo):
        raise ValueError("bounds must be non-degenerate (hi > lo)")
    return [np.linspace(lo[i], hi[i], res[i]) for i in range(3)], lo, hi, res


def marching_cubes(sdf_fn, resolution=128, bounds=((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
                   chunk: int = 65536) -> TriangleMesh:
    """Zero level set of `sdf_fn` over a dense grid, as a triangle mesh.

    `sdf_fn` maps (K, 3) points to (K,) signed distances; it is evaluated
    without gradient tracking, in chunks.  A grid with no sign change
    yields an empty mesh.
    """
    axes, lo, hi, res = _grid_axes(resolution, bounds)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    vals = np.empty(len(pts))
    with no_grad():
        for start in range(0, len(pts), chunk):
            stop = start + chunk
            vals[start:stop] = np.reshape(value(sdf_fn(pts[start:stop])), -1)
    vol = vals.reshape(tuple(res))
    if vol.min() > 0 or vol.max() < 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    spacing = tuple((hi - lo) / (res - 1))
    verts, faces, _, _ = measure.marching_cubes(
        vol, level=0.0, spacing=spacing, allow_degenerate=False)
    return TriangleMesh(verts + lo, faces.astype(np.int64))


def vertex_colors(field, mesh: TriangleMesh) -> np.ndarray:
    """Canonical-field color at each rest vertex (detached)."""
    with no_grad():
        return np.asarray(value(field.sample(mesh.vertices).color))


# -- bone assignment and skeleton ----------------------------------------------


@dataclass
class SkinnedMesh:
    mesh: TriangleMesh
    weights: np.ndarray  # (N, B) probability rows
    dominant: np.ndarray  # (N,) int, argmax of each row (ties -> lowest id)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.dominant = np.asarray(self.dominant, dtype=np.int64)
        if self.weights.shape != (len(self.mesh.vertices), self.n_bones):
            raise ValueError("weights must be (n_vertices, n_bones)")
        if self.dominant.shape != (len(self.mesh.vertices),):
            raise ValueError("need one dominant id per vertex")

    @property
    def n_bones(self) -> int:
        return self.weights.shape[1]


def assign_vertices(mesh: TriangleMesh, skin: SkinningModel) -> SkinnedMesh:
    """Skinning weights and dominant bone for every rest vertex."""
    if mesh.is_empty():
        raise ValueError("cannot assign bones on an empty mesh")
    with no_grad():
        w = np.asarray(value(skinning_weights(skin, mesh.vertices)))
    return SkinnedMesh(mesh, w, np.argmax(w, axis=-1))


@dataclass
class Skeleton:
    """Bone adjacency: unordered id pairs with their shared-boundary counts."""

    edges: np.ndarray  # (E, 2), each row sorted, unique
    counts: np.ndarray  # (E,)
    threshold: int = 3

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if len(self.edges) != len(self.counts):
            raise ValueError("one count per edge")
        if self.edges.size and np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self-edge in skeleton")

    def pairs(self) -> set:
        return {tuple(e) for e in self.edges}


def generate_skeleton(skinned: SkinnedMesh, threshold: int = 3) -> Skeleton:
    """Bone pairs sharing at least `threshold` cross-assigned mesh edges.

    Counting unit: unique vertex pairs that appear as a face edge and whose
    endpoints have different dominant bones (an edge shared by two faces
    counts once).
    """
    faces = skinned.mesh.faces
    if faces.size == 0:
        return Skeleton(np.zeros((0, 2), dtype=np.int64),
                        np.zeros(0, dtype=np.int64), threshold)
    ve = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [0, 2]]])
    ve = np.unique(np.sort(ve, axis=1), axis=0)
    bones = skinned.dominant[ve]
    bones = bones[bones[:, 0] != bones[:, 1]]
    if len(bones) == 0:
        return Skeleton(np.zeros((0, 2), dtype=np.int64),
                        np.zeros(0, dtype=np.int64), threshold)
    pairs, counts = np.unique(np.sort(bones, axis=1), axis=0, return_counts=True)
    keep = counts >= threshold
    return Skeleton(pairs[keep], counts[keep], threshold)


# -- posing ---------------------------------------------------------------------


def pose_mesh(skinned: SkinnedMesh, bone_quats, bone_trans) -> TriangleMesh:
    """Blend per-bone rigid transforms over the stored skinning weights.

    nu' = sum_b w_b (R_b nu + t_b).  Colors ride along unchanged (they were
    sampled from the canonical field at the rest positions).
    """
    q = np.asarray(value(bone_quats), dtype=np.float64).reshape(-1, 4)
    tr = np.asarray(value(bone_trans), dtype=np.float64).reshape(-1, 3)
    if len(q) != skinned.n_bones or len(tr) != skinned.n_bones:
        raise ValueError(f"expected {skinned.n_bones} bone transforms, "
                         f"got {len(q)} quats / {len(tr)} translations")
    verts = skinned.mesh.vertices
    per_bone = rt_apply(q, tr, verts[:, None, :])  # (N, B, 3)
    posed = (skinned.weights[..., None] * per_bone).sum(axis=1)
    return TriangleMesh(posed, skinned.mesh.faces.copy(),
                        None if skinned.mesh.colors is None
                        else skinned.mesh.colors.copy())


def pose_mesh_frame(skinned: SkinnedMesh, seq: MotionSequence, t: int) -> TriangleMesh:
    """Pose with the learned frame-t bone deltas dJ."""
    with no_grad():
        dq, dt = seq.delta_transform(t)
    return pose_mesh(skinned, value(dq), value(dt))


# -- OBJ ------------------------------------------------------------------------


class ObjFormatError(ValueError):
    pass


def write_obj(mesh: TriangleMesh, path):
    """ASCII OBJ: v records (x y z, plus r g b when colored), 1-based faces."""
    with open(path, "w") as fh:
        for i, v in enumerate(mesh.vertices):
            row = [format(x, ".17g") for x in v]
            if mesh.colors is not None:
                row += [format(c, ".17g") for c in mesh.colors[i]]
            fh.write("v " + " ".join(row) + "\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def read_obj(path) -> TriangleMesh:
    verts, colors, faces = [], [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) not in (4, 7):
                    raise ObjFormatError(f"line {ln}: v record needs 3 or 6 values")
                verts.append([float(x) for x in parts[1:4]])
                if len(parts) == 7:
                    colors.append([float(x) for x in parts[4:7]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ObjFormatError(f"line {ln}: only triangle faces supported")
                try:
                    faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
                except ValueError:
                    raise ObjFormatError(f"line {ln}: bad face index") from None
    if colors and len(colors) != len(verts):
        raise ObjFormatError("colored and uncolored v records mixed")
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int64).reshape(-1, 3),
                        np.array(colors) if colors else None)
