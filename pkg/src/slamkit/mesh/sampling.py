"""Surface sampling and nearest-neighbor distances for mesh metrics."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def sample_points(mesh, n: int, seed: int) -> np.ndarray:
    """Sample n points uniformly by area: triangles area-weighted, barycentric
    coordinates uniform. Deterministic for a given seed."""
    if mesh.is_empty():
        raise ValueError("cannot sample an empty mesh")
    if n <= 0:
        raise ValueError("need a positive sample count")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has no positive-area triangles")
    rng = np.random.default_rng(seed)
    tri = rng.choice(areas.size, size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    v0 = mesh.vertices[mesh.faces[tri, 0]]
    e1 = mesh.vertices[mesh.faces[tri, 1]] - v0
    e2 = mesh.vertices[mesh.faces[tri, 2]] - v0
    return v0 + u[:, None] * e1 + v[:, None] * e2


def nearest_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Exact Euclidean nearest-neighbor distance from each query point to the
    reference cloud (k-d tree; matches the brute-force result exactly)."""
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if reference.shape[0] == 0:
        raise ValueError("reference cloud is empty")
    tree = cKDTree(reference)
    d, _ = tree.query(query, k=1)
    return np.asarray(d, dtype=np.float64)
