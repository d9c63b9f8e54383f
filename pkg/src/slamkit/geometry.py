"""SE(3) pose algebra, pinhole camera model, and frame/trajectory containers.

Conventions used throughout the package:

- Poses are camera-to-world rigid transforms. World-to-camera matrices exist
  only transiently inside rendering and fusion internals.
- Quaternions are stored scalar-first (w, x, y, z). Trajectory files use the
  TUM scalar-last order; the conversion happens at the file boundary only.
- Axis-angle vectors are canonical with magnitude in [0, pi]. At exactly pi
  the axis sign is fixed so that its first nonzero component is positive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

# Below this rotation angle the exp/log maps switch to Taylor expansions.
SMALL_ANGLE = 1e-8


def _as_vec(x, n, name):
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"{name} must have {n} components, got shape {np.shape(x)}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v}")
    return v


def skew(w) -> np.ndarray:
    """Cross-product matrix: skew(w) @ v == cross(w, v)."""
    w = np.asarray(w, dtype=np.float64)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def so3_exp(w) -> np.ndarray:
    """Rotation matrix from an axis-angle vector (Rodrigues formula)."""
    w = _as_vec(w, 3, "axis-angle vector")
    theta2 = float(w @ w)
    theta = np.sqrt(theta2)
    K = skew(w)
    if theta < SMALL_ANGLE:
        # Second-order Taylor of sin(t)/t and (1-cos(t))/t^2.
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def _check_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("expected a finite 3x3 matrix")
    err = np.linalg.norm(R.T @ R - np.eye(3))
    if err > tol or np.linalg.det(R) < 0.0:
        raise ValueError(f"matrix is not a rotation (orthonormality error {err:.3e})")
    return R


def _canonical_pi_axis(axis):
    # At theta == pi both +axis and -axis describe the same rotation; pick the
    # sign that makes the first nonzero component positive.
    for c in axis:
        if c != 0.0:
            return axis if c > 0.0 else -axis
    return axis


def rot_to_quat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 from a rotation matrix."""
    R = _check_rotation(R)
    t = np.trace(R)
    if t > 0.0:
        r = np.sqrt(1.0 + t)
        s = 0.5 / r
        q = np.array(
            [0.5 * r, (R[2, 1] - R[1, 2]) * s, (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        r = np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        s = 0.5 / r
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) * s
        q[1 + i] = 0.5 * r
        q[1 + j] = (R[j, i] + R[i, j]) * s
        q[1 + k] = (R[k, i] + R[i, k]) * s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_rot(q) -> np.ndarray:
    """Rotation matrix from a quaternion (w, x, y, z); renormalizes the input."""
    q = _as_vec(q, 4, "quaternion")
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero quaternion has no rotation")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def so3_log(R) -> np.ndarray:
    """Canonical axis-angle vector (|w| in [0, pi]) from a rotation matrix.

    Goes through the quaternion form, which is stable both near the identity
    and near half-turn rotations.
    """
    q = rot_to_quat(R)
    w, xyz = q[0], q[1:]
    s = np.linalg.norm(xyz)
    if s < SMALL_ANGLE:
        return xyz * 2.0
    theta = 2.0 * np.arctan2(s, w)
    axis = xyz / s
    if theta > np.pi - 1e-12:
        axis = _canonical_pi_axis(axis)
        theta = np.pi
    return theta * axis


def quat_from_axis_angle(w) -> np.ndarray:
    w = _as_vec(w, 3, "axis-angle vector")
    theta = np.linalg.norm(w)
    if theta < SMALL_ANGLE:
        q = np.array([1.0, 0.5 * w[0], 0.5 * w[1], 0.5 * w[2]])
        return q / np.linalg.norm(q)
    axis = w / theta
    h = 0.5 * theta
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


def axis_angle_from_quat(q) -> np.ndarray:
    return so3_log(quat_to_rot(q))


def se3_exp(xi) -> np.ndarray:
    """4x4 rigid transform from a twist (rho, omega): translation then rotation."""
    xi = _as_vec(xi, 6, "twist")
    rho, omega = xi[:3], xi[3:]
    theta2 = float(omega @ omega)
    theta = np.sqrt(theta2)
    K = skew(omega)
    if theta < SMALL_ANGLE:
        b = 0.5 - theta2 / 24.0
        c = 1.0 / 6.0 - theta2 / 120.0
    else:
        b = (1.0 - np.cos(theta)) / theta2
        c = (theta - np.sin(theta)) / (theta2 * theta)
    V = np.eye(3) + b * K + c * (K @ K)
    T = np.eye(4)
    T[:3, :3] = so3_exp(omega)
    T[:3, 3] = V @ rho
    return T


def se3_log(T) -> np.ndarray:
    """Twist (rho, omega) such that se3_exp(result) reproduces T."""
    T = np.asarray(T, dtype=np.float64)
    omega = so3_log(T[:3, :3])
    theta2 = float(omega @ omega)
    theta = np.sqrt(theta2)
    K = skew(omega)
    if theta < SMALL_ANGLE:
        coef = 1.0 / 12.0 + theta2 / 720.0
    else:
        half = 0.5 * theta
        cot_half = np.cos(half) / np.sin(half)
        coef = 1.0 / theta2 - cot_half / (2.0 * theta)
    Vinv = np.eye(3) - 0.5 * K + coef * (K @ K)
    return np.concatenate([Vinv @ T[:3, 3], omega])


def matrix4(R, t) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = np.asarray(t, dtype=np.float64).reshape(3)
    return T


class RotationKind(enum.Enum):
    AXIS_ANGLE = "axis_angle"
    QUATERNION = "quaternion"


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform with a switchable rotation parameterization.

    Immutable value type; all constructors canonicalize the rotation parameter
    (unit quaternion with w >= 0, or axis-angle with magnitude in [0, pi]).
    """

    rotation_param: np.ndarray
    translation: np.ndarray
    kind: RotationKind = RotationKind.AXIS_ANGLE

    def __post_init__(self):
        t = _as_vec(self.translation, 3, "translation")
        if self.kind is RotationKind.AXIS_ANGLE:
            p = _as_vec(self.rotation_param, 3, "axis-angle parameter")
            theta = np.linalg.norm(p)
            if theta > np.pi + 1e-9:
                p = so3_log(so3_exp(p))
        else:
            p = _as_vec(self.rotation_param, 4, "quaternion parameter")
            n = np.linalg.norm(p)
            if n < 1e-12:
                raise ValueError("zero quaternion has no rotation")
            p = p / n
            if p[0] < 0.0:
                p = -p
        object.__setattr__(self, "rotation_param", _freeze(p))
        object.__setattr__(self, "translation", _freeze(t))

    @staticmethod
    def identity(kind: RotationKind = RotationKind.AXIS_ANGLE) -> "Pose":
        param = np.zeros(3) if kind is RotationKind.AXIS_ANGLE else np.array([1.0, 0, 0, 0])
        return Pose(param, np.zeros(3), kind)

    @staticmethod
    def from_rt(R, t, kind: RotationKind = RotationKind.AXIS_ANGLE) -> "Pose":
        R = _check_rotation(R)
        if kind is RotationKind.AXIS_ANGLE:
            return Pose(so3_log(R), t, kind)
        return Pose(rot_to_quat(R), t, kind)

    @staticmethod
    def from_matrix(T, kind: RotationKind = RotationKind.AXIS_ANGLE) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {T.shape}")
        return Pose.from_rt(T[:3, :3], T[:3, 3], kind)

    def rotation(self) -> np.ndarray:
        if self.kind is RotationKind.AXIS_ANGLE:
            return so3_exp(self.rotation_param)
        return quat_to_rot(self.rotation_param)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) regardless of the stored parameterization."""
        if self.kind is RotationKind.QUATERNION:
            return np.array(self.rotation_param)
        return rot_to_quat(self.rotation())

    def to_matrix(self) -> np.ndarray:
        return matrix4(self.rotation(), self.translation)

    def with_kind(self, kind: RotationKind) -> "Pose":
        if kind is self.kind:
            return self
        return Pose.from_rt(self.rotation(), self.translation, kind)

    def compose(self, other: "Pose") -> "Pose":
        R, t = self.rotation(), self.translation
        return Pose.from_rt(R @ other.rotation(), R @ other.translation + t, self.kind)

    def inverse(self) -> "Pose":
        R = self.rotation()
        return Pose.from_rt(R.T, -R.T @ self.translation, self.kind)

    def apply(self, points) -> np.ndarray:
        """Rotate then translate; accepts a single 3-point or an (N, 3) array."""
        p = np.asarray(points, dtype=np.float64)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        out = p @ self.rotation().T + self.translation
        return out[0] if single else out

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)


def pose_distance(a: Pose, b: Pose) -> Tuple[float, float]:
    """Translation (m) and rotation (rad) magnitudes of the relative transform."""
    rel = a.inverse().compose(b)
    return float(np.linalg.norm(rel.translation)), float(np.linalg.norm(so3_log(rel.rotation())))


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera intrinsics plus the stored-depth-to-meters scale."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = 1.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be positive")

    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def scaled(self, factor: int) -> "CameraModel":
        """Intrinsics for an image downsampled by an integer factor."""
        if factor == 1:
            return self
        return replace(
            self,
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            width=self.width // factor,
            height=self.height // factor,
        )

    def project(self, p_cam) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project camera-frame points to (u, v, valid).

        valid is False when z <= 1e-6 or the pixel falls outside
        [0, width) x [0, height).
        """
        p = np.atleast_2d(np.asarray(p_cam, dtype=np.float64))
        z = p[:, 2]
        safe_z = np.where(np.abs(z) > 1e-12, z, 1.0)
        u = self.fx * p[:, 0] / safe_z + self.cx
        v = self.fy * p[:, 1] / safe_z + self.cy
        valid = (z > 1e-6) & (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        if np.ndim(p_cam) == 1:
            return float(u[0]), float(v[0]), bool(valid[0])
        return u, v, valid

    def unproject(self, u, v, z) -> np.ndarray:
        """Camera-frame point(s) from pixel coordinates and z-depth."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        x = (u - self.cx) * z / self.fx
        y = (v - self.cy) * z / self.fy
        return np.stack(np.broadcast_arrays(x, y, z), axis=-1)

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) unit ray directions in the camera frame, one per pixel center."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u, dtype=np.float64)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Frame:
    """One timestamped RGB-D observation with optional estimated / true poses."""

    index: int
    timestamp: float
    color: np.ndarray  # (H, W, 3) float in [0, 1]
    depth: np.ndarray  # (H, W) float meters, 0 = invalid
    est_pose: Optional[Pose] = None
    gt_pose: Optional[Pose] = None

    def __post_init__(self):
        color = np.asarray(self.color, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        if color.ndim != 3 or color.shape[2] != 3:
            raise ValueError(f"color must be (H, W, 3), got {color.shape}")
        if depth.shape != color.shape[:2]:
            raise ValueError(f"depth shape {depth.shape} does not match color {color.shape[:2]}")
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise ValueError("depth must be finite and non-negative")
        object.__setattr__(self, "color", _freeze(color))
        object.__setattr__(self, "depth", _freeze(depth))

    def with_est_pose(self, pose: Pose) -> "Frame":
        return replace(self, est_pose=pose)


@dataclass
class Trajectory:
    """Timestamped pose sequence with strictly increasing timestamps."""

    _timestamps: list = field(default_factory=list)
    _poses: list = field(default_factory=list)

    @staticmethod
    def from_samples(samples: Sequence[Tuple[float, Pose]]) -> "Trajectory":
        traj = Trajectory()
        for t, p in samples:
            traj.append(t, p)
        return traj

    def append(self, timestamp: float, pose: Pose) -> None:
        if self._timestamps and timestamp <= self._timestamps[-1]:
            raise ValueError(
                f"timestamps must be strictly increasing: {timestamp} after {self._timestamps[-1]}"
            )
        self._timestamps.append(float(timestamp))
        self._poses.append(pose)

    def timestamps(self) -> np.ndarray:
        return np.array(self._timestamps)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self._poses]).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self._timestamps)

    def __iter__(self) -> Iterator[Tuple[float, Pose]]:
        return iter(zip(self._timestamps, self._poses))

    def __getitem__(self, i) -> Tuple[float, Pose]:
        return self._timestamps[i], self._poses[i]
