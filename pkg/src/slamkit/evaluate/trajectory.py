"""Trajectory accuracy: TUM-format I/O, association, Umeyama alignment, ATE."""

from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

import numpy as np

from slamkit.datasets.association import match_timestamps
from slamkit.geometry import Pose, RotationKind, Trajectory

ALIGN_MODES = ("none", "se3", "sim3")


def read_tum_trajectory(path) -> Trajectory:
    """One pose per line: "timestamp tx ty tz qx qy qz qw" (scalar-last),
    '#' comments permitted."""
    traj = Trajectory()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        t, tx, ty, tz, qx, qy, qz, qw = (float(x) for x in parts)
        traj.append(t, Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]),
                            kind=RotationKind.QUATERNION))
    if len(traj) == 0:
        raise ValueError(f"{path}: no poses")
    return traj


def write_tum_trajectory(traj: Trajectory, path) -> None:
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for t, pose in traj:
        q = pose.quaternion()  # scalar-first internally, scalar-last on disk
        tx, ty, tz = pose.translation
        lines.append(
            f"{t:.6f} {tx:.6f} {ty:.6f} {tz:.6f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f} {q[0]:.9f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def associate_trajectories(gt: Trajectory, est: Trajectory,
                           max_dt: float = 0.02) -> Tuple[List[Pose], List[Pose]]:
    """Greedy mutual-nearest timestamp pairing; needs at least 3 pairs."""
    if len(gt) == 0 or len(est) == 0:
        raise ValueError("cannot associate an empty trajectory")
    pairs = match_timestamps(list(gt.timestamps()), list(est.timestamps()), max_dt)
    if len(pairs) < 3:
        raise ValueError(f"only {len(pairs)} trajectory pairs within {max_dt}s; need >= 3")
    gt_poses = [gt[i][1] for i, _ in pairs]
    est_poses = [est[j][1] for _, j in pairs]
    return gt_poses, est_poses


def umeyama(src, dst, with_scale: bool) -> Tuple[float, np.ndarray, np.ndarray]:
    """Least-squares similarity transform: minimizes sum ||dst - (s R src + t)||^2.

    Closed form via SVD of the centered cross-covariance with the
    determinant-sign correction; s is fixed to 1 when with_scale is false.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape or src.shape[0] < 3:
        raise ValueError("need two equal-length point lists with at least 3 points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = (xs ** 2).sum() / src.shape[0]
    if var_s < 1e-24:
        raise ValueError("degenerate input: source points are all coincident")
    cov = xd.T @ xs / src.shape[0]
    U, D, Vt = np.linalg.svd(cov)
    if D[0] < 1e-18:
        raise ValueError("degenerate input: rank-0 cross-covariance")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(D) @ S) / var_s) if with_scale else 1.0
    t = mu_d - s * R @ mu_s
    return s, R, t


def ate_rmse(gt_positions, est_positions, align: str = "se3") -> float:
    """RMSE of translational residuals after the chosen alignment, in cm."""
    gt = np.asarray(gt_positions, dtype=np.float64).reshape(-1, 3)
    est = np.asarray(est_positions, dtype=np.float64).reshape(-1, 3)
    if gt.shape != est.shape or gt.shape[0] == 0:
        raise ValueError("paired position lists required")
    align = align.lower()
    if align not in ALIGN_MODES:
        raise ValueError(f"align must be one of {ALIGN_MODES}")
    if align == "none":
        aligned = est
    else:
        if gt.shape[0] < 3:
            raise ValueError("aligned ATE needs at least 3 pairs")
        s, R, t = umeyama(est, gt, with_scale=(align == "sim3"))
        aligned = s * est @ R.T + t
    residual = aligned - gt
    return float(np.sqrt(np.mean((residual ** 2).sum(axis=1))) * 100.0)
