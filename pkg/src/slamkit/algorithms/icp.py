"""Point-to-plane ICP with projective data association and Gauss-Newton
optimization over a left-multiplicative twist."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from slamkit.errors import TrackingDivergence
from slamkit.geometry import CameraModel, Pose, se3_exp

# Condition-number floor of the 6x6 normal matrix below which the geometry is
# treated as degenerate (a single plane leaves three twist directions blind).
MIN_CONDITION = 1e-9


@dataclass
class IcpParams:
    pyramid_levels: int = 3
    max_iters: List[int] = field(default_factory=lambda: [10, 5, 4])  # coarse -> fine
    dist_reject: float = 0.10  # meters
    normal_reject: float = 0.524  # radians (~30 degrees)
    convergence_eps: float = 1e-6
    min_correspondences: int = 200

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("need at least one pyramid level")
        if len(self.max_iters) != self.pyramid_levels:
            raise ValueError("max_iters must list one count per level")
        if min(self.max_iters) < 1 or self.dist_reject <= 0 or self.normal_reject <= 0:
            raise ValueError("ICP parameters must be positive")


@dataclass
class IcpStats:
    iterations: int = 0
    final_error: float = 0.0  # RMS point-to-plane residual, meters
    inlier_count: int = 0
    step_errors: List[Tuple[float, float]] = field(default_factory=list)


def predict_constant_velocity(prev: Optional[Pose], prev2: Optional[Pose]) -> Pose:
    """Extrapolate the last relative motion; falls back to the last pose or
    the identity when history is short."""
    if prev is None:
        return Pose.identity()
    if prev2 is None:
        return prev
    return prev.compose(prev2.inverse().compose(prev))


def estimate_normals(depth: np.ndarray, cam: CameraModel, max_rel_jump: float = 0.15):
    """Per-pixel unit normals in the camera frame from central differences of
    unprojected points, oriented toward the camera (n . p < 0).

    Returns (normals (H, W, 3), valid (H, W)). A pixel is invalid when its own
    depth or any 4-neighbor depth is invalid, or when a neighbor sits across a
    depth discontinuity (relative jump above max_rel_jump), where central
    differences would fabricate silhouette normals.
    """
    h, w = depth.shape
    u, v = np.meshgrid(np.arange(w), np.arange(h))
    pts = cam.unproject(u, v, depth)
    du = np.zeros_like(pts)
    dv = np.zeros_like(pts)
    du[:, 1:-1] = pts[:, 2:] - pts[:, :-2]
    dv[1:-1, :] = pts[2:, :] - pts[:-2, :]
    n = np.cross(du, dv)
    norm = np.linalg.norm(n, axis=2)
    ok = depth > 0
    jump = max_rel_jump * np.maximum(depth, 1e-12)
    ok[:, 1:-1] &= ((depth[:, 2:] > 0) & (depth[:, :-2] > 0)
                    & (np.abs(depth[:, 2:] - depth[:, 1:-1]) < jump[:, 1:-1])
                    & (np.abs(depth[:, :-2] - depth[:, 1:-1]) < jump[:, 1:-1]))
    ok[1:-1, :] &= ((depth[2:, :] > 0) & (depth[:-2, :] > 0)
                    & (np.abs(depth[2:, :] - depth[1:-1, :]) < jump[1:-1, :])
                    & (np.abs(depth[:-2, :] - depth[1:-1, :]) < jump[1:-1, :]))
    ok[0, :] = ok[-1, :] = False
    ok[:, 0] = ok[:, -1] = False
    ok &= norm > 1e-12
    n = n / np.maximum(norm, 1e-300)[..., None]
    flip = (n * pts).sum(axis=2) > 0
    n[flip] = -n[flip]
    n[~ok] = 0.0
    return n, ok


def point_plane_residual(xi, base_matrix, p_cam, q_w, n_w) -> np.ndarray:
    """Residuals n . (exp(xi) T p - q) of the left-multiplicative objective."""
    T = se3_exp(xi) @ base_matrix
    p_w = p_cam @ T[:3, :3].T + T[:3, 3]
    return ((p_w - q_w) * n_w).sum(axis=1)


def point_plane_jacobian(base_matrix, p_cam, q_w, n_w) -> np.ndarray:
    """Analytic d residual / d xi at xi = 0: [n, p x n] per correspondence."""
    base_matrix = np.asarray(base_matrix, dtype=np.float64)
    p_w = p_cam @ base_matrix[:3, :3].T + base_matrix[:3, 3]
    return np.concatenate([n_w, np.cross(p_w, n_w)], axis=1)


def _decimate(img):
    return img[::2, ::2]


def icp_point_to_plane(model_depth, model_normals, live_depth, cam: CameraModel,
                       init: Pose, params: IcpParams,
                       model_pose: Optional[Pose] = None) -> Tuple[Pose, IcpStats]:
    """Align the live depth image against a rendered model view.

    model_depth/model_normals are the model surface as seen from model_pose
    (normals in that camera's frame); by default the model view is rendered at
    the initial pose estimate (frame-to-model tracking). Coarse-to-fine over
    a pyramid of decimated images; the pose update is left-multiplicative,
    solved from the 6x6 normal equations with step halving.
    """
    if model_depth.shape != live_depth.shape:
        raise ValueError("model and live images must have the same size")
    if model_pose is None:
        model_pose = init
    live_norm, _ = estimate_normals(live_depth, cam)

    # Pyramids, finest last.
    levels = []
    d_m, n_m, d_l, n_l, c = model_depth, model_normals, live_depth, live_norm, cam
    for _ in range(params.pyramid_levels):
        levels.append((d_m, n_m, d_l, n_l, c))
        d_m, n_m, d_l, n_l, c = (_decimate(d_m), _decimate(n_m), _decimate(d_l),
                                 _decimate(n_l), c.scaled(2))
    levels.reverse()

    r_model = model_pose.rotation()
    t_model = model_pose.translation
    T = init.to_matrix()
    stats = IcpStats()
    last_count = 0
    for level, (d_m, n_m, d_l, n_l, c) in enumerate(levels):
        finest = level == len(levels) - 1
        # Model maps in world coordinates, once per level.
        h, w = d_m.shape
        uu, vv = np.meshgrid(np.arange(w), np.arange(h))
        q_cam = c.unproject(uu, vv, d_m)
        q_world = q_cam @ r_model.T + t_model
        nq_world = n_m @ r_model.T
        model_ok = (d_m > 0) & (np.linalg.norm(n_m, axis=2) > 0.5)

        live_ok = (d_l > 0) & (np.linalg.norm(n_l, axis=2) > 0.5)
        p_cam = c.unproject(uu, vv, d_l)[live_ok]
        np_cam = n_l[live_ok]
        if p_cam.shape[0] == 0:
            if finest:
                raise TrackingDivergence("no valid depth in the live frame")
            continue

        for _ in range(params.max_iters[level]):
            R, t = T[:3, :3], T[:3, 3]
            p_w = p_cam @ R.T + t
            np_w = np_cam @ R.T
            # Project into the model view for association.
            pm = (p_w - t_model) @ r_model
            with np.errstate(divide="ignore", invalid="ignore"):
                pu = np.floor(c.fx * pm[:, 0] / pm[:, 2] + c.cx + 0.5)
                pv = np.floor(c.fy * pm[:, 1] / pm[:, 2] + c.cy + 0.5)
            sel = (pm[:, 2] > 1e-6) & (pu >= 0) & (pu < w) & (pv >= 0) & (pv < h)
            pu_i = pu[sel].astype(np.int64)
            pv_i = pv[sel].astype(np.int64)
            sel_idx = np.nonzero(sel)[0]
            assoc_ok = model_ok[pv_i, pu_i]
            sel_idx = sel_idx[assoc_ok]
            pu_i, pv_i = pu_i[assoc_ok], pv_i[assoc_ok]
            q = q_world[pv_i, pu_i]
            nq = nq_world[pv_i, pu_i]
            pw_sel = p_w[sel_idx]
            dist = np.linalg.norm(pw_sel - q, axis=1)
            angle_cos = (np_w[sel_idx] * nq).sum(axis=1)
            keep = (dist <= params.dist_reject) & (angle_cos >= np.cos(params.normal_reject))
            sel_idx, q, nq = sel_idx[keep], q[keep], nq[keep]
            last_count = sel_idx.size
            if last_count < max(6, params.min_correspondences if finest else 6):
                if finest:
                    raise TrackingDivergence(
                        f"too few ICP correspondences: {last_count} < {params.min_correspondences}"
                    )
                break

            pw_k = p_w[sel_idx]
            r = ((pw_k - q) * nq).sum(axis=1)
            J = np.concatenate([nq, np.cross(pw_k, nq)], axis=1)
            A = J.T @ J
            b = -J.T @ r
            eig = np.linalg.eigvalsh(A)
            if eig[0] <= 0 or eig[0] / eig[-1] < MIN_CONDITION:
                raise TrackingDivergence(
                    "degenerate geometry: normal-equation matrix is rank deficient "
                    f"(condition ratio {max(eig[0], 0.0) / eig[-1]:.2e}); "
                    "the view constrains fewer than 6 motion directions"
                )
            delta = np.linalg.solve(A, b)
            stats.iterations += 1
            if np.linalg.norm(delta) < params.convergence_eps:
                stats.final_error = float(np.sqrt(np.mean(r ** 2)))
                break

            e_old = float(np.mean(r ** 2))
            p_sub = p_cam[sel_idx]
            accepted = False
            scale = 1.0
            for _ in range(5):  # full step plus up to 4 halvings
                T_new = se3_exp(scale * delta) @ T
                p_try = p_sub @ T_new[:3, :3].T + T_new[:3, 3]
                e_new = float(np.mean((((p_try - q) * nq).sum(axis=1)) ** 2))
                if e_new <= e_old * (1.0 + 1e-12):
                    stats.step_errors.append((e_old, e_new))
                    T = T_new
                    accepted = True
                    break
                scale *= 0.5
            if not accepted:
                raise TrackingDivergence(
                    "point-to-plane error still increasing after 4 step halvings"
                )
            stats.final_error = float(np.sqrt(e_new))
            if np.linalg.norm(scale * delta) < params.convergence_eps:
                break

    if last_count < params.min_correspondences:
        raise TrackingDivergence(
            f"too few ICP correspondences: {last_count} < {params.min_correspondences}"
        )
    stats.inlier_count = int(last_count)
    return Pose.from_matrix(T), stats
