"""Dense truncated signed-distance voxel grid with per-voxel fusion weights."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from slamkit import kernels
from slamkit.geometry import CameraModel, Pose


class TsdfVolume:
    """Voxel samples on lattice points origin + index * voxel_size.

    tsdf values are clamped distances in truncation units, in [-1, 1];
    weight 0 marks unobserved samples. An optional color grid carries fused
    RGB in [0, 1].
    """

    def __init__(self, origin, extents, voxel_size: float, with_color: bool = False,
                 truncation: Optional[float] = None):
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        extents = np.asarray(extents, dtype=np.float64).reshape(3)
        if np.any(extents <= 0) or voxel_size <= 0:
            raise ValueError("extents and voxel_size must be positive")
        dims = np.floor(extents / voxel_size).astype(np.int64) + 1
        if np.any(dims < 2):
            raise ValueError("volume must span at least 2 samples per axis")
        self.origin = origin
        self.voxel_size = float(voxel_size)
        self.truncation = float(truncation) if truncation is not None else 4.0 * voxel_size
        if self.truncation <= self.voxel_size:
            raise ValueError("truncation must exceed voxel_size")
        self.dims = tuple(int(d) for d in dims)
        self.tsdf = np.ones(self.dims, dtype=np.float32)
        self.weight = np.zeros(self.dims, dtype=np.float32)
        self.color = np.zeros(self.dims + (3,), dtype=np.float32) if with_color else None

    @property
    def max_bound(self) -> np.ndarray:
        return self.origin + self.voxel_size * (np.array(self.dims) - 1)

    def weight_sum(self) -> float:
        return float(self.weight.sum(dtype=np.float64))

    def state_digest(self) -> bytes:
        import hashlib

        h = hashlib.sha256(self.tsdf.tobytes())
        h.update(self.weight.tobytes())
        if self.color is not None:
            h.update(self.color.tobytes())
        return h.digest()

    def integrate(self, depth: np.ndarray, color: Optional[np.ndarray],
                  camera: CameraModel, pose: Pose, truncation: float,
                  max_weight: float) -> None:
        """Fuse one observation taken at `pose` (camera-to-world)."""
        t_cw = np.linalg.inv(pose.to_matrix())
        kernels.tsdf_integrate(
            self.tsdf, self.weight,
            self.color if color is not None else None,
            self.origin, self.voxel_size, truncation, max_weight,
            np.ascontiguousarray(depth, dtype=np.float64),
            np.ascontiguousarray(color, dtype=np.float64) if color is not None else None,
            camera.fx, camera.fy, camera.cx, camera.cy,
            np.ascontiguousarray(t_cw),
        )

    def sample(self, points_world) -> Tuple[np.ndarray, np.ndarray]:
        """Trilinear tsdf values and validity at world points."""
        p = np.atleast_2d(np.asarray(points_world, dtype=np.float64))
        g = (p - self.origin) / self.voxel_size
        from slamkit.kernels._python import _trilinear

        return _trilinear(self.tsdf, self.weight, g[:, 0], g[:, 1], g[:, 2])

    def normals_at(self, points_world) -> Tuple[np.ndarray, np.ndarray]:
        """Unit surface normals from the tsdf gradient (central differences)."""
        p = np.atleast_2d(np.asarray(points_world, dtype=np.float64))
        h = self.voxel_size
        grad = np.empty_like(p)
        valid = np.ones(p.shape[0], dtype=bool)
        for a in range(3):
            dp = np.zeros(3)
            dp[a] = h
            hi, ok_hi = self.sample(p + dp)
            lo, ok_lo = self.sample(p - dp)
            grad[:, a] = hi - lo
            valid &= ok_hi & ok_lo
        norm = np.linalg.norm(grad, axis=1)
        valid &= norm > 1e-12
        grad /= np.maximum(norm, 1e-300)[:, None]
        return grad, valid

    def raycast(self, camera: CameraModel, pose: Pose, max_range: float = 8.0,
                with_normals: bool = False, with_color: bool = False):
        """Render a z-depth image (plus optional world normals / color) from the map.

        Returns depth (H, W) with 0 on miss; normals (H, W, 3) world-frame and
        color (H, W, 3) where requested, with invalid entries zeroed.
        """
        rays_cam = camera.pixel_rays()
        shape = rays_cam.shape[:2]
        r_wc = pose.rotation()
        dirs = rays_cam.reshape(-1, 3) @ r_wc.T
        t = kernels.tsdf_raycast(
            self.tsdf, self.weight, self.origin, self.voxel_size,
            self.truncation, pose.translation, dirs, max_range,
        )
        hit = t > 0
        depth = (t * rays_cam.reshape(-1, 3)[:, 2]).reshape(shape)
        depth[~hit.reshape(shape)] = 0.0
        out = [depth]
        points = pose.translation + t[:, None] * dirs
        if with_normals:
            normals = np.zeros((points.shape[0], 3))
            if hit.any():
                n, ok = self.normals_at(points[hit])
                # Orient toward the camera.
                flip = (n * dirs[hit]).sum(axis=1) > 0
                n[flip] = -n[flip]
                n[~ok] = 0.0
                normals[hit] = n
            out.append(normals.reshape(shape + (3,)))
        if with_color:
            img = np.zeros((points.shape[0], 3))
            if self.color is not None and hit.any():
                img[hit] = self._sample_color(points[hit])
            out.append(img.reshape(shape + (3,)))
        return out[0] if len(out) == 1 else tuple(out)

    def _sample_color(self, points_world) -> np.ndarray:
        from slamkit.kernels._python import _trilinear

        p = np.atleast_2d(np.asarray(points_world, dtype=np.float64))
        g = (p - self.origin) / self.voxel_size
        out = np.empty_like(p)
        for c in range(3):
            out[:, c], _ = _trilinear(self.color[..., c], self.weight, g[:, 0], g[:, 1], g[:, 2])
        return np.clip(out, 0.0, 1.0)
