import numpy as np
from scipy import ndimage

from slamkit.mesh.marching import marching_cubes_mesh
from slamkit.mesh.mc_tables import EDGE_TABLE, TRI_TABLE


def sphere_field(center, r, origin, voxel, n):
    idx = np.arange(n)
    X, Y, Z = np.meshgrid(*[origin[a] + idx * voxel for a in range(3)], indexing="ij")
    return np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2) - r


def edge_use_counts(faces):
    counts = {}
    for tri in faces:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return np.array(list(counts.values()))


class TestTables:
    def test_tri_rows_use_exactly_the_crossed_edges(self):
        for ci in range(256):
            used = set(int(e) for e in TRI_TABLE[ci] if e >= 0)
            expected = set(e for e in range(12) if EDGE_TABLE[ci] & (1 << e))
            assert used == expected, f"configuration {ci}"

    def test_tri_rows_are_triples_with_tail_terminators(self):
        for ci in range(256):
            row = TRI_TABLE[ci]
            n = int((row >= 0).sum())
            assert n % 3 == 0
            assert all(e < 0 for e in row[n:])


class TestMarchingCubes:
    def test_all_positive_volume_gives_empty_mesh(self):
        field = np.ones((8, 8, 8))
        mesh = marching_cubes_mesh(field, None, np.zeros(3), 0.1)
        assert mesh.is_empty()

    def test_sphere_vertices_within_voxel_diagonal(self):
        voxel = 0.01
        origin = np.array([-0.7, -0.7, -0.7])
        field = sphere_field((0, 0, 0), 0.5, origin, voxel, int(1.4 / voxel) + 1)
        mesh = marching_cubes_mesh(field, None, origin, voxel)
        r = np.linalg.norm(mesh.vertices, axis=1)
        bound = np.sqrt(3) * voxel
        assert mesh.faces.shape[0] > 1000
        assert r.min() > 0.5 - bound and r.max() < 0.5 + bound

    def test_plane_vertices_and_normals(self):
        voxel = 0.01
        origin = np.zeros(3)
        n = 40
        idx = np.arange(n)
        Z = np.meshgrid(idx, idx, idx, indexing="ij")[2] * voxel
        field = Z - 0.20131  # plane z = 0.20131, normal +z
        mesh = marching_cubes_mesh(field, None, origin, voxel)
        assert np.abs(mesh.vertices[:, 2] - 0.20131).max() < voxel
        normals = mesh.face_normals()
        angles = np.degrees(np.arccos(np.clip(normals[:, 2], -1, 1)))
        assert angles.max() < 1.0  # oriented along +gradient (outward for SDFs)

    def test_translation_by_whole_voxels_shifts_vertices_exactly(self):
        voxel = 0.02
        origin = np.array([-0.3, -0.3, -0.3])
        field = sphere_field((0.013, -0.021, 0.007), 0.2, origin, voxel, 31)
        a = marching_cubes_mesh(field, None, origin, voxel)
        b = marching_cubes_mesh(field, None, origin + 3 * voxel, voxel)
        assert np.array_equal(a.faces, b.faces)
        assert np.allclose(b.vertices - a.vertices, 3 * voxel, atol=0)

    def test_watertight_on_random_smooth_fields(self):
        rng = np.random.default_rng(0)
        for trial in range(8):
            field = ndimage.gaussian_filter(rng.normal(size=(18, 20, 22)), 2.0)
            # Keep the surface interior so every component closes.
            field[0, :, :] = field[-1, :, :] = 1.0
            field[:, 0, :] = field[:, -1, :] = 1.0
            field[:, :, 0] = field[:, :, -1] = 1.0
            verts, tris = _raw_mc(field)
            if tris.shape[0] == 0:
                continue
            counts = edge_use_counts(tris)
            assert (counts == 2).all(), f"trial {trial}: open or over-shared edges"

    def test_watertight_on_white_noise_covers_all_configurations(self):
        # Unsmoothed noise maximizes ambiguous saddle faces; a face-consistent
        # table must still close every edge. Also verifies essentially every
        # cube configuration is exercised.
        seen = set()
        for seed in range(12):
            rng = np.random.default_rng(seed)
            field = rng.normal(size=(12, 13, 14))
            field[0, :, :] = field[-1, :, :] = 1.0
            field[:, 0, :] = field[:, -1, :] = 1.0
            field[:, :, 0] = field[:, :, -1] = 1.0
            verts, tris = _raw_mc(field)
            counts = edge_use_counts(tris)
            assert (counts == 2).all(), f"seed {seed}: open or over-shared edges"
            inside = field < 0
            b = inside.astype(np.uint16)
            codes = (b[:-1, :-1, :-1] | (b[1:, :-1, :-1] << 1) | (b[1:, 1:, :-1] << 2)
                     | (b[:-1, 1:, :-1] << 3) | (b[:-1, :-1, 1:] << 4)
                     | (b[1:, :-1, 1:] << 5) | (b[1:, 1:, 1:] << 6) | (b[:-1, 1:, 1:] << 7))
            seen.update(np.unique(codes).tolist())
        assert len(seen & set(range(1, 255))) >= 250

    def test_zero_weight_cells_are_skipped(self):
        voxel = 0.02
        origin = np.array([-0.3, -0.3, -0.3])
        field = sphere_field((0, 0, 0), 0.2, origin, voxel, 31)
        valid = np.ones(field.shape, dtype=bool)
        valid[:, :, 16:] = False  # hide the upper half
        mesh = marching_cubes_mesh(field, valid, origin, voxel)
        full = marching_cubes_mesh(field, None, origin, voxel)
        assert 0 < mesh.faces.shape[0] < full.faces.shape[0]
        # No vertex may come from edges strictly inside the invalid region.
        assert mesh.vertices[:, 2].max() <= origin[2] + 16 * voxel + 1e-12

    def test_no_degenerate_triangles(self):
        voxel = 0.01
        origin = np.array([-0.7, -0.7, -0.7])
        # Lattice-aligned sphere: crossings exactly at corners create
        # candidate zero-area triangles that must be filtered.
        field = sphere_field((0, 0, 0), 0.5, origin, voxel, int(1.4 / voxel) + 1)
        mesh = marching_cubes_mesh(field, None, origin, voxel)
        assert mesh.triangle_areas().min() > 1e-12

    def test_sphere_normals_point_outward(self):
        voxel = 0.02
        origin = np.array([-0.3, -0.3, -0.3])
        field = sphere_field((0.003, 0.007, -0.004), 0.2, origin, voxel, 31)
        mesh = marching_cubes_mesh(field, None, origin, voxel)
        centers = mesh.vertices[mesh.faces].mean(axis=1) - np.array([0.003, 0.007, -0.004])
        dots = (mesh.face_normals() * centers).sum(axis=1)
        assert (dots > 0).all()


def _raw_mc(field):
    from slamkit import kernels

    valid = np.ones(field.shape, dtype=bool)
    return kernels.marching_cubes(np.ascontiguousarray(field, dtype=np.float64), valid, 0.0)
