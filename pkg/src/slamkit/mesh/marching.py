"""Marching cubes wrapper: index-space kernel output to a world-space mesh."""

from __future__ import annotations

import numpy as np

from slamkit import kernels
from slamkit.mesh import TriangleMesh

DEGENERATE_AREA = 1e-12  # m^2


def marching_cubes_mesh(field, valid, origin, voxel_size, iso: float = 0.0,
                        color_sampler=None) -> TriangleMesh:
    """Extract the iso-surface of a scalar lattice as a world-space mesh.

    `field` holds samples at origin + index * voxel_size; cells touching any
    invalid sample are skipped. Degenerate (near zero area) triangles and the
    vertices only they referenced are dropped. `color_sampler`, when given,
    maps world-space vertex positions to float RGB in [0, 1].
    """
    field = np.asarray(field, dtype=np.float64)
    if valid is None:
        valid = np.ones(field.shape, dtype=bool)
    verts_idx, tris = kernels.marching_cubes(field, np.asarray(valid, dtype=bool), float(iso))
    verts = np.asarray(origin, dtype=np.float64) + np.asarray(verts_idx) * float(voxel_size)
    # The lookup table winds faces toward lower field values; flip so normals
    # point outward for signed-distance fields (negative inside the solid).
    tris = np.asarray(tris, dtype=np.int64)[:, [0, 2, 1]]
    if tris.shape[0]:
        v0 = verts[tris[:, 0]]
        area = 0.5 * np.linalg.norm(
            np.cross(verts[tris[:, 1]] - v0, verts[tris[:, 2]] - v0), axis=1
        )
        tris = tris[area > DEGENERATE_AREA]
    # Prune vertices no surviving triangle references, preserving order.
    used = np.zeros(verts.shape[0], dtype=bool)
    used[tris.reshape(-1)] = True
    remap = np.cumsum(used) - 1
    verts = verts[used]
    tris = remap[tris] if tris.size else tris
    colors = None
    if color_sampler is not None and verts.shape[0]:
        rgb = np.clip(color_sampler(verts), 0.0, 1.0)
        colors = np.floor(rgb * 255.0 + 0.5).astype(np.uint8)
    return TriangleMesh(verts, tris, colors)


def mesh_from_volume(volume, iso: float = 0.0) -> TriangleMesh:
    """Surface of the observed (weight > 0) region of a TSDF volume."""
    sampler = None
    if volume.color is not None:
        sampler = volume._sample_color
    return marching_cubes_mesh(
        volume.tsdf, volume.weight > 0, volume.origin, volume.voxel_size, iso, sampler
    )
