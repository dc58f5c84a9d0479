"""Checkpoint-level operations: image and flow dumps, mesh and skeleton
extraction, bundle export, and the camera-azimuth coverage diagnostic."""

from __future__ import annotations

import pathlib

import numpy as np

from .autodiff import no_grad
from .bundle import ArticulatedBundle, build_bundle, export_bundle
from .fitting import FittedModels
from .geometry import quat_conj, quat_rotate
from .images import write_f32, write_ppm
from .meshing import (TriangleMesh, assign_vertices, generate_skeleton,
                      marching_cubes, vertex_colors)
from .rendering import render_flow_image, render_image

N_AZIMUTH_BINS = 36


def camera_azimuth(quats) -> np.ndarray:
    """Azimuth of each camera's optical axis in the canonical frame.

    Zero for a camera on the canonical -z side looking along +z, growing as
    the camera circles toward +x; range (-pi, pi].
    """
    q = np.atleast_2d(np.asarray(quats, dtype=np.float64))
    axis = quat_rotate(quat_conj(q), np.array([0.0, 0.0, 1.0]))
    return np.arctan2(-axis[..., 0], axis[..., 2])


def azimuth_coverage(quats, n_bins: int = N_AZIMUTH_BINS):
    """Fraction of azimuth bins hit by the cameras, plus per-bin counts.

    Bins are centered on the canonical directions (bin edges at half-bin
    offsets), so a camera looking exactly down a bin direction cannot flip
    bins over rounding noise.
    """
    az = camera_azimuth(quats)
    bins = (np.floor((az + np.pi) / (2.0 * np.pi) * n_bins + 0.5).astype(int)
            % n_bins)
    occupancy = np.zeros(n_bins, dtype=int)
    np.add.at(occupancy, bins, 1)
    ratio = float(np.count_nonzero(occupancy)) / n_bins
    return ratio, occupancy.tolist()


def render_frame(fitted: FittedModels, t: int, out_dir, n_samples: int = 64,
                 pair: int | None = None):
    """Write rgb/silhouette (ppm + f32) for frame t, flow too when paired."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kw = dict(n_samples=n_samples, jitter=False, near=fitted.near,
              far=fitted.far)
    with no_grad():
        color, opacity, _ = render_image(fitted.field, fitted.seq,
                                         fitted.skin, t, **kw)
        stem = out / f"{t:04d}"
        write_ppm(f"{stem}.rgb.ppm", color)
        write_ppm(f"{stem}.sil.ppm", opacity)
        write_f32(f"{stem}.rgb.f32", color)
        write_f32(f"{stem}.sil.f32", opacity)
        if pair is not None:
            flow = render_flow_image(fitted.field, fitted.seq, fitted.skin,
                                     t, pair, **kw)
            write_f32(f"{stem}.flow.f32", flow)
    return stem


def flow_field(fitted: FittedModels, t: int, t2: int,
               n_samples: int = 64) -> np.ndarray:
    with no_grad():
        return render_flow_image(fitted.field, fitted.seq, fitted.skin, t, t2,
                                 n_samples=n_samples, jitter=False,
                                 near=fitted.near, far=fitted.far)


def extract_mesh(fitted: FittedModels, resolution: int = 64,
                 bound: float = 1.0) -> TriangleMesh:
    """Marching-cubes mesh of the canonical surface, with sampled colors."""
    bounds = ((-bound,) * 3, (bound,) * 3)
    mesh = marching_cubes(fitted.field.sdf, resolution=resolution,
                          bounds=bounds)
    if mesh.is_empty():
        return mesh
    return TriangleMesh(mesh.vertices, mesh.faces,
                        colors=vertex_colors(fitted.field, mesh))


def extract_skinned(fitted: FittedModels, resolution: int = 64,
                    bound: float = 1.0, threshold: int = 3):
    """Mesh plus bone assignment and skeleton; (None, None) when empty."""
    mesh = extract_mesh(fitted, resolution=resolution, bound=bound)
    if mesh.is_empty():
        return None, None
    skinned = assign_vertices(mesh, fitted.skin)
    skeleton = generate_skeleton(skinned, threshold=threshold)
    return skinned, skeleton


def export_fitted_bundle(fitted: FittedModels, out_path, resolution: int = 64,
                         bound: float = 1.0, threshold: int = 3,
                         meta: dict | None = None) -> ArticulatedBundle | None:
    skinned, skeleton = extract_skinned(fitted, resolution=resolution,
                                        bound=bound, threshold=threshold)
    if skinned is None:
        return None
    base = {"grid_resolution": resolution, "n_frames": fitted.seq.n_frames}
    bundle = build_bundle(skinned, fitted.skin, fitted.seq, skeleton,
                          meta={**base, **(meta or {})})
    export_bundle(bundle, out_path)
    return bundle
