import numpy as np
import pytest

from slamkit.algorithms.icp import (IcpParams, estimate_normals, icp_point_to_plane,
                                    point_plane_jacobian, point_plane_residual,
                                    predict_constant_velocity)
from slamkit.datasets.synthetic import SdfScene, look_at, raycast_sdf
from slamkit.errors import TrackingDivergence
from slamkit.geometry import CameraModel, Pose, se3_exp, so3_exp, so3_log

CAM = CameraModel(fx=80.0, fy=80.0, cx=79.5, cy=59.5, width=160, height=120)


def sphere_room_scene():
    return SdfScene.build(room_half_extents=(2.0, 2.0, 1.3),
                          spheres=[((0.45, 0.0, -0.3), 0.5, (0.8, 0.2, 0.2))])


class TestConstantVelocity:
    def test_no_history_is_identity(self):
        assert np.allclose(predict_constant_velocity(None, None).to_matrix(), np.eye(4))

    def test_single_pose_repeats(self):
        p = Pose(np.array([0.1, 0.2, -0.1]), [1.0, 2.0, 3.0])
        assert np.allclose(predict_constant_velocity(p, None).to_matrix(), p.to_matrix())

    def test_linear_extrapolation(self):
        p1 = Pose(np.zeros(3), [0.1, 0.0, 0.0])
        pred = predict_constant_velocity(p1, Pose.identity())
        assert np.allclose(pred.translation, [0.2, 0.0, 0.0], atol=1e-12)

    def test_relative_motion_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p2 = Pose(rng.normal(size=3) * 0.5, rng.normal(size=3))
            p1 = Pose(rng.normal(size=3) * 0.5, rng.normal(size=3))
            pred = predict_constant_velocity(p1, p2)
            lhs = p1.inverse().compose(pred).to_matrix()
            rhs = p2.inverse().compose(p1).to_matrix()
            assert np.linalg.norm(lhs - rhs) < 1e-12


class TestNormals:
    def test_frontal_plane(self):
        depth = np.full((40, 60), 2.0)
        normals, valid = estimate_normals(depth, CameraModel(fx=50, fy=50, cx=29.5, cy=19.5,
                                                             width=60, height=40))
        assert valid[1:-1, 1:-1].all()
        assert np.allclose(normals[valid], [0, 0, -1], atol=1e-9)

    def test_invalid_neighbors_invalidate(self):
        depth = np.full((20, 20), 2.0)
        depth[10, 10] = 0.0
        _, valid = estimate_normals(depth, CameraModel(fx=50, fy=50, cx=9.5, cy=9.5,
                                                       width=20, height=20))
        assert not valid[10, 10]
        assert not valid[10, 9] and not valid[9, 10]  # 4-neighbors lose support

    def test_sphere_normals_match_sdf_gradient(self):
        scene = sphere_room_scene()
        pose = look_at((-0.55, 0.0, -0.3), (0.45, 0.0, -0.3))  # sphere fills the view
        depth, points, hit = raycast_sdf(scene, CAM, pose)
        normals_cam, valid = estimate_normals(depth, CAM)
        n_world = normals_cam.reshape(-1, 3) @ pose.rotation().T
        ref = scene.normals(points)
        # Compare on the sphere surface (room creases average two wall planes).
        center, r = np.array([0.45, 0.0, -0.3]), 0.5
        on_sphere = np.abs(np.linalg.norm(points - center, axis=1) - r) < 1e-3
        use = valid.reshape(-1) & hit.reshape(-1) & on_sphere
        assert use.sum() > 2000
        cos = np.clip((n_world[use] * ref[use]).sum(axis=1), -1, 1)
        angles = np.degrees(np.arccos(cos))
        assert np.quantile(angles, 0.99) < 2.0


class TestJacobian:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(100):
            base = np.eye(4)
            base[:3, :3] = so3_exp(rng.normal(size=3))
            base[:3, 3] = rng.normal(size=3)
            p = rng.normal(size=(1, 3))
            q = rng.normal(size=(1, 3))
            n = rng.normal(size=(1, 3))
            n /= np.linalg.norm(n)
            J = point_plane_jacobian(base, p, q, n)[0]
            num = np.zeros(6)
            for k in range(6):
                e = np.zeros(6)
                e[k] = h
                rp = point_plane_residual(e, base, p, q, n)[0]
                rm = point_plane_residual(-e, base, p, q, n)[0]
                num[k] = (rp - rm) / (2 * h)
            denom = max(np.linalg.norm(num), 1e-12)
            assert np.linalg.norm(J - num) / denom < 1e-5


class TestIcp:
    def make_view(self, pose):
        scene = sphere_room_scene()
        depth, _, _ = raycast_sdf(scene, CAM, pose)
        normals, _ = estimate_normals(depth, CAM)
        return depth, normals

    def test_fixed_point_converges_immediately(self):
        pose = look_at((-1.2, 0.1, -0.2), (0.45, 0.0, -0.3))
        depth, normals = self.make_view(pose)
        params = IcpParams()
        out, stats = icp_point_to_plane(depth, normals, depth, CAM, pose, params)
        assert np.linalg.norm(out.to_matrix() - pose.to_matrix()) < 1e-9
        assert stats.iterations <= params.pyramid_levels  # one converged pass per level

    def test_recovers_small_motion_from_identity_init(self):
        pose_a = look_at((-1.2, 0.1, -0.2), (0.45, 0.0, -0.3))
        # true relative motion: 1 cm translation, 1 degree rotation
        twist = np.array([0.006, -0.006, 0.005, 0.0, 0.0, np.deg2rad(1.0)])
        pose_b = Pose.from_matrix(pose_a.to_matrix() @ se3_exp(twist))
        depth_a, normals_a = self.make_view(pose_a)
        depth_b, _ = self.make_view(pose_b)
        est, stats = icp_point_to_plane(depth_a, normals_a, depth_b, CAM, pose_a,
                                        IcpParams(), model_pose=pose_a)
        err = np.linalg.inv(pose_b.to_matrix()) @ est.to_matrix()
        t_err = np.linalg.norm(err[:3, 3])
        r_err = np.degrees(np.linalg.norm(so3_log(err[:3, :3])))
        assert t_err < 1e-3
        assert r_err < 0.1
        assert stats.inlier_count >= IcpParams().min_correspondences

    def test_error_non_increasing_over_accepted_steps(self):
        pose_a = look_at((-1.2, 0.1, -0.2), (0.45, 0.0, -0.3))
        twist = np.array([0.01, 0.005, -0.008, 0.002, -0.003, 0.004])
        pose_b = Pose.from_matrix(pose_a.to_matrix() @ se3_exp(twist))
        depth_a, normals_a = self.make_view(pose_a)
        depth_b, _ = self.make_view(pose_b)
        _, stats = icp_point_to_plane(depth_a, normals_a, depth_b, CAM, pose_a,
                                      IcpParams(), model_pose=pose_a)
        assert stats.step_errors  # at least one Gauss-Newton step ran
        for before, after in stats.step_errors:
            assert after <= before * (1 + 1e-12)

    def test_single_plane_is_degenerate(self):
        depth = np.full((120, 160), 2.0)
        normals, _ = estimate_normals(depth, CAM)
        with pytest.raises(TrackingDivergence, match="degenerate|rank"):
            icp_point_to_plane(depth, normals, depth * 1.01, CAM, Pose.identity(),
                               IcpParams())

    def test_too_few_correspondences(self):
        pose = look_at((-1.2, 0.1, -0.2), (0.45, 0.0, -0.3))
        depth, normals = self.make_view(pose)
        live = np.zeros_like(depth)
        live[:8, :8] = depth[:8, :8]  # almost everything invalid
        with pytest.raises(TrackingDivergence, match="few|valid depth"):
            icp_point_to_plane(depth, normals, live, CAM, pose, IcpParams())
