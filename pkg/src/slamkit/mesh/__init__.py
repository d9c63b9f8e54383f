"""Geometry backend: meshes, marching cubes, BVH ray casting, and PLY I/O."""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class TriangleMesh:
    """Indexed triangle mesh; colors are per-vertex uint8 RGB when present."""

    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (T, 3) int64
    colors: Optional[np.ndarray] = None  # (V, 3) uint8

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if self.colors.shape[0] != self.vertices.shape[0]:
                raise ValueError("need one color per vertex")

    def is_empty(self) -> bool:
        return self.faces.shape[0] == 0

    def triangle_areas(self) -> np.ndarray:
        v0 = self.vertices[self.faces[:, 0]]
        e1 = self.vertices[self.faces[:, 1]] - v0
        e2 = self.vertices[self.faces[:, 2]] - v0
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def face_normals(self) -> np.ndarray:
        v0 = self.vertices[self.faces[:, 0]]
        e1 = self.vertices[self.faces[:, 1]] - v0
        e2 = self.vertices[self.faces[:, 2]] - v0
        n = np.cross(e1, e2)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(norm, 1e-300)


from slamkit.mesh.bvh import Bvh, raycast_mesh_depth  # noqa: E402
from slamkit.mesh.marching import marching_cubes_mesh  # noqa: E402
from slamkit.mesh.ply import read_ply, write_ply  # noqa: E402
from slamkit.mesh.sampling import nearest_distances, sample_points  # noqa: E402
from slamkit.mesh.volume import TsdfVolume  # noqa: E402

__all__ = [
    "TriangleMesh",
    "TsdfVolume",
    "Bvh",
    "marching_cubes_mesh",
    "nearest_distances",
    "raycast_mesh_depth",
    "read_ply",
    "sample_points",
    "write_ply",
]
