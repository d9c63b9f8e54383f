import numpy as np
import pytest

from slamkit.evaluate.trajectory import (associate_trajectories, ate_rmse,
                                         read_tum_trajectory, umeyama,
                                         write_tum_trajectory)
from slamkit.geometry import Pose, Trajectory, so3_exp


def random_rigid(rng):
    R = so3_exp(rng.normal(size=3))
    t = rng.normal(size=3)
    return R, t


def _batch_rodrigues(ws):
    """(N, 3) rotation vectors -> (N, 3, 3) rotation matrices, vectorized."""
    theta = np.linalg.norm(ws, axis=1, keepdims=True)
    safe = np.maximum(theta, 1e-30)
    k = ws / safe
    K = np.zeros((len(ws), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
    K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
    s = np.sin(theta)[..., None]
    c = (1 - np.cos(theta))[..., None]
    return np.eye(3) + s * K + c * (K @ K)


def brute_force_similarity(src, dst, with_scale, rounds=5):
    """Grid search over rotations (Fibonacci axes x angles) with nested
    refinement; scale and translation in closed form per candidate rotation.
    Independent of the SVD solution path."""
    src = np.asarray(src)
    dst = np.asarray(dst)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    var_s = (xs ** 2).sum() / len(src)

    k = np.arange(400)
    golden = np.pi * (3 - np.sqrt(5))
    z = 1 - 2 * (k + 0.5) / 400
    rad = np.sqrt(1 - z ** 2)
    axes = np.stack([rad * np.cos(k * golden), rad * np.sin(k * golden), z], axis=1)
    angles = np.linspace(-1.0, 1.0, 21)
    best = (np.inf, np.zeros(3), 1.0)
    center = np.zeros(3)
    spread = np.pi
    for _ in range(rounds):
        ws = (center[None, None, :] + axes[:, None, :] * (angles[None, :, None] * spread))
        ws = ws.reshape(-1, 3)
        ws = ws[np.linalg.norm(ws, axis=1) <= np.pi]
        Rs = _batch_rodrigues(ws)
        rotated = np.einsum("nij,pj->npi", Rs, xs)
        if with_scale:
            ss = (xd[None] * rotated).sum(axis=(1, 2)) / (var_s * len(src))
        else:
            ss = np.ones(len(ws))
        err = ((xd[None] - ss[:, None, None] * rotated) ** 2).sum(axis=(1, 2))
        i = int(np.argmin(err))
        if err[i] < best[0]:
            best = (float(err[i]), ws[i], float(ss[i]))
        center = best[1]
        spread /= 8.0
    e, w, s = best
    R = so3_exp(w)
    t = mu_d - s * R @ mu_s
    return s, R, t, e


class TestUmeyama:
    def test_identity_when_equal(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(10, 3))
        s, R, t = umeyama(pts, pts, with_scale=True)
        assert abs(s - 1) < 1e-12
        assert np.linalg.norm(R - np.eye(3)) < 1e-12
        assert np.linalg.norm(t) < 1e-12

    def test_recovers_constructed_similarity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            R0, t0 = random_rigid(rng)
            src = rng.normal(size=(8, 3))
            dst = 2.5 * src @ R0.T + t0
            s, R, t = umeyama(src, dst, with_scale=True)
            assert abs(s - 2.5) < 1e-9
            assert np.linalg.norm(R - R0) < 1e-9
            assert np.linalg.norm(t - t0) < 1e-9

    def test_recovers_constructed_rigid(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            R0, t0 = random_rigid(rng)
            src = rng.normal(size=(6, 3))
            dst = src @ R0.T + t0
            s, R, t = umeyama(src, dst, with_scale=False)
            assert s == 1.0
            assert np.linalg.norm(R - R0) < 1e-9
            assert np.linalg.norm(t - t0) < 1e-9

    def test_mirror_gets_proper_rotation(self):
        rng = np.random.default_rng(3)
        src = rng.normal(size=(4, 3))
        dst = src.copy()
        dst[:, 2] = -dst[:, 2]  # reflection, det -1
        s, R, t = umeyama(src, dst, with_scale=False)
        assert np.isclose(np.linalg.det(R), 1.0)
        residual = ((dst - (src @ R.T + t)) ** 2).sum()
        assert residual > 1e-6
        # Brute-force proper-rotation search agrees on the optimum.
        _, _, _, e_ref = brute_force_similarity(src, dst, with_scale=False)
        assert residual <= e_ref + 1e-3

    @pytest.mark.parametrize("with_scale", [False, True])
    @pytest.mark.parametrize("seed", [4, 5, 6])
    def test_matches_brute_force_on_4_point_sets(self, seed, with_scale):
        rng = np.random.default_rng(seed)
        src = rng.normal(size=(4, 3))
        R0, t0 = random_rigid(rng)
        dst = (1.7 if with_scale else 1.0) * src @ R0.T + t0 + rng.normal(size=(4, 3)) * 0.05
        s, R, t = umeyama(src, dst, with_scale=with_scale)
        e_svd = ((dst - (s * src @ R.T + t)) ** 2).sum()
        _, _, _, e_ref = brute_force_similarity(src, dst, with_scale=with_scale)
        assert e_svd <= e_ref + 1e-3
        assert abs(e_svd - e_ref) < 1e-3

    def test_coincident_sources_rejected(self):
        src = np.ones((5, 3))
        dst = np.random.default_rng(0).normal(size=(5, 3))
        with pytest.raises(ValueError, match="degenerate|coincident"):
            umeyama(src, dst, with_scale=True)


class TestAte:
    def make_positions(self, n=20, seed=0):
        rng = np.random.default_rng(seed)
        return np.cumsum(rng.normal(size=(n, 3)) * 0.1, axis=0)

    def test_equal_trajectories_zero(self):
        p = self.make_positions()
        assert ate_rmse(p, p, align="none") == 0.0

    def test_translated_copy(self):
        p = self.make_positions()
        q = p + np.array([1.0, 0.0, 0.0])
        assert np.isclose(ate_rmse(p, q, align="none"), 100.0)
        assert ate_rmse(p, q, align="se3") < 1e-9

    def test_scaled_copy_needs_sim3(self):
        p = self.make_positions()
        q = (p - p.mean(axis=0)) * 0.5 + p.mean(axis=0)
        assert ate_rmse(p, q, align="se3") > 0.1
        assert ate_rmse(p, q, align="sim3") < 1e-9

    def test_se3_invariant_to_rigid_disturbance(self):
        rng = np.random.default_rng(7)
        p = self.make_positions(seed=1)
        q = p + rng.normal(size=p.shape) * 0.01
        base = ate_rmse(p, q, align="se3")
        for _ in range(10):
            R0, t0 = random_rigid(rng)
            moved = q @ R0.T + t0
            assert abs(ate_rmse(p, moved, align="se3") - base) < 1e-9

    def test_sim3_additionally_scale_invariant(self):
        rng = np.random.default_rng(8)
        p = self.make_positions(seed=2)
        q = p + rng.normal(size=p.shape) * 0.01
        base = ate_rmse(p, q, align="sim3")
        for _ in range(10):
            R0, t0 = random_rigid(rng)
            s0 = rng.uniform(0.2, 5.0)
            moved = s0 * q @ R0.T + t0
            assert abs(ate_rmse(p, moved, align="sim3") - base) < 1e-9


class TestTrajectoryIo:
    def make_traj(self, n=10, seed=0):
        rng = np.random.default_rng(seed)
        traj = Trajectory()
        for i in range(n):
            traj.append(i * 0.1, Pose(rng.normal(size=3), rng.normal(size=3)))
        return traj

    def test_round_trip(self, tmp_path):
        traj = self.make_traj()
        path = tmp_path / "traj.txt"
        write_tum_trajectory(traj, path)
        back = read_tum_trajectory(path)
        assert len(back) == len(traj)
        for (t0, p0), (t1, p1) in zip(traj, back):
            assert abs(t0 - t1) < 1e-6
            assert np.linalg.norm(p0.translation - p1.translation) < 1e-6
            q0, q1 = p0.quaternion(), p1.quaternion()
            assert min(np.linalg.norm(q0 - q1), np.linalg.norm(q0 + q1)) < 1e-6

    def test_comments_skipped(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("# header\n0.0 1 2 3 0 0 0 1\n# more\n1.0 4 5 6 0 0 0 1\n")
        traj = read_tum_trajectory(path)
        assert len(traj) == 2
        assert np.allclose(traj[0][1].translation, [1, 2, 3])

    def test_association_cases(self):
        full = self.make_traj(10)
        half = Trajectory.from_samples([(t, p) for i, (t, p) in enumerate(full) if i % 2 == 0])
        g, e = associate_trajectories(full, full)
        assert len(g) == 10
        g, e = associate_trajectories(full, half)
        assert len(g) == 5
        shifted = Trajectory.from_samples([(t + 100.0, p) for t, p in full])
        with pytest.raises(ValueError, match="pairs"):
            associate_trajectories(full, shifted)
