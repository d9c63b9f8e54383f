"""Axis-aligned BVH over mesh triangles and depth-map ray casting."""

from __future__ import annotations

import numpy as np

from slamkit import kernels
from slamkit.geometry import CameraModel, Pose

LEAF_SIZE = 8


class Bvh:
    """Binary bounding-volume hierarchy, flattened to arrays for traversal."""

    def __init__(self, mesh):
        if mesh.is_empty():
            raise ValueError("cannot build a BVH over an empty mesh")
        self.mesh = mesh
        v = mesh.vertices
        f = mesh.faces
        tri_min = np.minimum(np.minimum(v[f[:, 0]], v[f[:, 1]]), v[f[:, 2]])
        tri_max = np.maximum(np.maximum(v[f[:, 0]], v[f[:, 1]]), v[f[:, 2]])
        centroids = 0.5 * (tri_min + tri_max)

        nodes_min, nodes_max = [], []
        left, right, start, count = [], [], [], []
        order = np.arange(f.shape[0])

        # Iterative median-split build over centroid extents.
        stack = [(0, f.shape[0], -1, False)]
        while stack:
            lo, hi, parent, is_right = stack.pop()
            ids = order[lo:hi]
            node = len(nodes_min)
            nodes_min.append(tri_min[ids].min(axis=0))
            nodes_max.append(tri_max[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            if parent >= 0:
                if is_right:
                    right[parent] = node
                else:
                    left[parent] = node
            if hi - lo <= LEAF_SIZE:
                start.append(lo)
                count.append(hi - lo)
                continue
            start.append(0)
            count.append(0)
            c = centroids[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (hi - lo) // 2
            sel = np.argpartition(c[:, axis], mid)
            order[lo:hi] = ids[sel]
            stack.append((lo + mid, hi, node, True))
            stack.append((lo, lo + mid, node, False))

        self.nodes_min = np.ascontiguousarray(nodes_min, dtype=np.float64)
        self.nodes_max = np.ascontiguousarray(nodes_max, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int64)
        self.right = np.ascontiguousarray(right, dtype=np.int64)
        self.start = np.ascontiguousarray(start, dtype=np.int64)
        self.count = np.ascontiguousarray(count, dtype=np.int64)
        self.order = np.ascontiguousarray(order, dtype=np.int64)

    def raycast(self, origins, dirs):
        """Nearest hits: (t, triangle index) per ray; (inf, -1) on miss."""
        return kernels.bvh_raycast(
            self.nodes_min, self.nodes_max, self.left, self.right,
            self.start, self.count, self.order,
            np.ascontiguousarray(self.mesh.vertices),
            np.ascontiguousarray(self.mesh.faces),
            origins, dirs,
        )


def raycast_mesh_depth(bvh: Bvh, camera: CameraModel, pose: Pose,
                       return_tris: bool = False):
    """Render a z-depth image of the mesh from a camera pose; 0 on miss."""
    rays_cam = camera.pixel_rays()
    dirs = rays_cam.reshape(-1, 3) @ pose.rotation().T
    origins = np.broadcast_to(pose.translation, dirs.shape)
    t, tri = bvh.raycast(origins, dirs)
    depth = t * rays_cam.reshape(-1, 3)[:, 2]
    depth[~np.isfinite(depth)] = 0.0
    depth = depth.reshape(rays_cam.shape[:2])
    if return_tris:
        return depth, tri.reshape(rays_cam.shape[:2])
    return depth
