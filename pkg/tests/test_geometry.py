import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from slamkit.geometry import (CameraModel, Frame, Pose, RotationKind, Trajectory, matrix4,
                              quat_to_rot, rot_to_quat, se3_exp, se3_log, so3_exp, so3_log)


def random_rotvecs(n, seed, max_angle=np.pi):
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, size=n)
    return axes * angles[:, None]


class TestSo3:
    def test_zero_rotation_is_identity(self):
        assert np.allclose(so3_exp([0, 0, 0]), np.eye(3))

    def test_quarter_turn_about_z(self):
        R = so3_exp([0, 0, np.pi / 2])
        expected = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)
        assert np.allclose(R, expected, atol=1e-12)

    def test_exp_matches_scipy(self):
        # Independent oracle for the Rodrigues formula.
        for w in random_rotvecs(200, seed=0):
            assert np.allclose(so3_exp(w), Rotation.from_rotvec(w).as_matrix(), atol=1e-12)

    def test_exp_orthonormal_10k(self):
        ws = random_rotvecs(10_000, seed=1)
        worst = 0.0
        for w in ws:
            R = so3_exp(w)
            worst = max(worst, np.linalg.norm(R.T @ R - np.eye(3)))
        assert worst < 1e-12

    def test_log_identity(self):
        assert np.allclose(so3_log(np.eye(3)), np.zeros(3))

    def test_log_half_turn_about_x(self):
        # Canonical sign rule: first nonzero axis component positive.
        w = so3_log(np.diag([1.0, -1.0, -1.0]))
        assert np.allclose(w, [np.pi, 0, 0], atol=1e-12)

    def test_round_trip_1000(self):
        for w in random_rotvecs(1000, seed=2, max_angle=np.pi - 1e-6):
            assert np.linalg.norm(so3_log(so3_exp(w)) - w) < 1e-9

    def test_log_near_pi_stable(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            w = axis * (np.pi - 1e-7)
            R = so3_exp(w)
            w2 = so3_log(R)
            assert np.linalg.norm(so3_exp(w2) - R) < 1e-6
            assert np.linalg.norm(w2) <= np.pi + 1e-12

    def test_small_angle_branch(self):
        w = np.array([1e-10, -2e-10, 5e-11])
        R = so3_exp(w)
        assert np.allclose(so3_log(R), w, atol=1e-15)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            so3_exp([np.nan, 0, 0])

    def test_log_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            so3_log(np.eye(3) * 2.0)


class TestQuaternion:
    def test_identity(self):
        assert np.allclose(quat_to_rot([1, 0, 0, 0]), np.eye(3))

    def test_half_turn_about_z(self):
        assert np.allclose(quat_to_rot([0, 0, 0, 1]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)

    def test_round_trip_up_to_sign(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            q2 = rot_to_quat(quat_to_rot(q))
            assert min(np.linalg.norm(q2 - q), np.linalg.norm(q2 + q)) < 1e-9

    def test_scalar_part_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            q = rot_to_quat(Rotation.random(random_state=np.random.RandomState(int(rng.integers(1 << 30)))).as_matrix())
            assert q[0] >= 0.0

    def test_zero_quaternion_rejected(self):
        with pytest.raises(ValueError):
            quat_to_rot([0, 0, 0, 0])


class TestSe3:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            xi = rng.normal(size=6)
            xi[3:] *= 0.9 * np.pi / max(1e-9, np.linalg.norm(xi[3:]))  # keep below pi
            T = se3_exp(xi)
            assert np.linalg.norm(se3_log(T) - xi) < 1e-9

    def test_exp_zero(self):
        assert np.allclose(se3_exp(np.zeros(6)), np.eye(4))


class TestPose:
    def test_compose_identity(self):
        rng = np.random.default_rng(7)
        b = Pose(rng.normal(size=3) * 0.5, rng.normal(size=3))
        out = Pose.identity().compose(b)
        assert np.allclose(out.to_matrix(), b.to_matrix(), atol=1e-12)

    def test_apply_translation_only(self):
        p = Pose(np.zeros(3), [1.0, 2.0, 3.0])
        assert np.allclose(p.apply([0.0, 0.0, 0.0]), [1, 2, 3])

    def test_apply_is_rotate_then_translate(self):
        p = Pose([0, 0, np.pi / 2], [1.0, 0.0, 0.0])
        assert np.allclose(p.apply([1.0, 0.0, 0.0]), [1.0, 1.0, 0.0], atol=1e-12)

    def test_compose_associative(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a, b, c = (Pose(rng.normal(size=3), rng.normal(size=3)) for _ in range(3))
            left = a.compose(b).compose(c).to_matrix()
            right = a.compose(b.compose(c)).to_matrix()
            assert np.linalg.norm(left - right) < 1e-9

    def test_inverse(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            a = Pose(rng.normal(size=3), rng.normal(size=3))
            assert np.linalg.norm(a.compose(a.inverse()).to_matrix() - np.eye(4)) < 1e-9

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(10)
        for kind in RotationKind:
            for _ in range(100):
                T = matrix4(so3_exp(rng.normal(size=3)), rng.normal(size=3))
                p = Pose.from_matrix(T, kind)
                assert np.linalg.norm(p.to_matrix() - T) < 1e-9

    def test_parameterizations_agree(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            T = matrix4(so3_exp(rng.normal(size=3)), rng.normal(size=3))
            a = Pose.from_matrix(T, RotationKind.AXIS_ANGLE)
            q = Pose.from_matrix(T, RotationKind.QUATERNION)
            assert np.linalg.norm(a.to_matrix() - q.to_matrix()) < 1e-9

    def test_quaternion_param_normalized(self):
        p = Pose(np.array([2.0, 0.0, 0.0, 0.0]), np.zeros(3), RotationKind.QUATERNION)
        assert abs(np.linalg.norm(p.rotation_param) - 1.0) < 1e-9

    def test_immutable(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.translation[0] = 1.0


class TestCamera:
    CAM = CameraModel(fx=100.0, fy=110.0, cx=63.5, cy=47.5, width=128, height=96)

    def test_optical_axis_projects_to_principal_point(self):
        u, v, ok = self.CAM.project(np.array([0.0, 0.0, 1.0]))
        assert ok and np.isclose(u, 63.5) and np.isclose(v, 47.5)

    def test_point_behind_camera_invalid(self):
        _, _, ok = self.CAM.project(np.array([0.0, 0.0, -1.0]))
        assert not ok

    def test_project_unproject_round_trip(self):
        rng = np.random.default_rng(12)
        count = 0
        while count < 1000:
            p = rng.uniform([-1, -1, 0.2], [1, 1, 5.0])
            u, v, ok = self.CAM.project(p)
            if not ok:
                continue
            count += 1
            assert np.linalg.norm(self.CAM.unproject(u, v, p[2]) - p) < 1e-9

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            CameraModel(fx=-1, fy=1, cx=1, cy=1, width=10, height=10)
        with pytest.raises(ValueError):
            CameraModel(fx=1, fy=1, cx=20, cy=1, width=10, height=10)

    def test_scaled_halves_intrinsics(self):
        cam = CameraModel(fx=100, fy=100, cx=320, cy=240, width=640, height=480).scaled(2)
        assert (cam.fx, cam.cx, cam.width) == (50.0, 160.0, 320)


class TestContainers:
    def test_trajectory_rejects_non_monotonic(self):
        t = Trajectory()
        t.append(0.0, Pose.identity())
        t.append(1.0, Pose.identity())
        with pytest.raises(ValueError):
            t.append(1.0, Pose.identity())
        with pytest.raises(ValueError):
            t.append(0.5, Pose.identity())

    def test_frame_validates_shapes(self):
        color = np.zeros((4, 6, 3))
        with pytest.raises(ValueError):
            Frame(0, 0.0, color, np.zeros((5, 6)))
        with pytest.raises(ValueError):
            Frame(0, 0.0, color, np.full((4, 6), -1.0))
