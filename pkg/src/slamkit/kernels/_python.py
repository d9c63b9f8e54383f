"""Pure numpy implementations of the hot kernels.

This backend is the import-time fallback when the compiled extension is not
available (and the reference the extension is tested against). Each function
mirrors the signature and the exact arithmetic of its compiled twin: the same
expression trees evaluated in the same order, so results agree to the last
bit wherever the operations are elementwise.
"""

from __future__ import annotations

import numpy as np

from slamkit.mesh.mc_tables import TRI_TABLE

BACKEND = "python"

# Primitive kind codes used in the (P, 10) scene encoding:
# col 0 kind, cols 1:4 center, cols 4:7 shape params, cols 7:10 albedo.
PRIM_ROOM = 0  # inverted box; params = half-extents
PRIM_SPHERE = 1  # params[0] = radius
PRIM_BOX = 2  # params = half-extents


def scene_sdf(prims, points):
    """Signed distance of the min-combined scene at (N, 3) points."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = np.full(p.shape[0], np.inf)
    for row in np.asarray(prims, dtype=np.float64):
        d = np.minimum(d, _prim_sdf(row, p))
    return d


def _prim_sdf(row, p):
    kind = int(row[0])
    c = row[1:4]
    if kind == PRIM_SPHERE:
        return np.sqrt(((p - c) ** 2).sum(axis=1)) - row[4]
    q = np.abs(p - c) - row[4:7]
    outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(axis=1))
    inside = np.minimum(np.max(q, axis=1), 0.0)
    d = outside + inside
    return -d if kind == PRIM_ROOM else d


def sphere_trace(prims, origin, dirs, max_range, tol, max_steps):
    """March unit-direction rays through the scene SDF.

    Returns per-ray hit distance t, inf on miss (no surface within max_range
    or step budget exhausted).
    """
    prims = np.asarray(prims, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = dirs.shape[0]
    t = np.zeros(n)
    result = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(max_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        p = origin + t[idx, None] * dirs[idx]
        d = scene_sdf(prims, p)
        hit = d < tol
        result[idx[hit]] = t[idx[hit]]
        active[idx[hit]] = False
        go = idx[~hit]
        t[go] = t[go] + d[~hit]
        over = t[go] > max_range
        active[go[over]] = False
    return result


def tsdf_integrate(tsdf, weight, color, origin, voxel_size, trunc, max_weight,
                   depth, color_img, fx, fy, cx, cy, t_cw):
    """Fuse one depth (+color) frame into the voxel grid, in place.

    Volume samples live on lattice points origin + index * voxel_size. t_cw is
    the 4x4 world-to-camera matrix. Projective association by nearest pixel;
    running-average update clamped to max_weight.
    """
    nx, ny, nz = tsdf.shape
    h, w = depth.shape
    r = np.asarray(t_cw, dtype=np.float64)
    # Chunk along x to bound temporary memory on large grids.
    ys = origin[1] + voxel_size * np.arange(ny)
    zs = origin[2] + voxel_size * np.arange(nz)
    py = np.broadcast_to(ys[:, None], (ny, nz))
    pz = np.broadcast_to(zs[None, :], (ny, nz))
    for i0 in range(0, nx, 64):
        i1 = min(i0 + 64, nx)
        xs = origin[0] + voxel_size * np.arange(i0, i1)
        px = xs[:, None, None]
        xc = px * r[0, 0] + py * r[0, 1] + pz * r[0, 2] + r[0, 3]
        yc = px * r[1, 0] + py * r[1, 1] + pz * r[1, 2] + r[1, 3]
        zc = px * r[2, 0] + py * r[2, 1] + pz * r[2, 2] + r[2, 3]
        with np.errstate(divide="ignore", invalid="ignore"):
            uf = np.floor(fx * xc / zc + cx + 0.5)
            vf = np.floor(fy * yc / zc + cy + 0.5)
        ok = (zc > 1e-6) & (uf >= 0) & (uf < w) & (vf >= 0) & (vf < h)
        if not ok.any():
            continue
        ii, jj, kk = np.nonzero(ok)
        uu = uf[ok].astype(np.int64)
        vv = vf[ok].astype(np.int64)
        d = depth[vv, uu]
        sdf = d - zc[ok]
        upd = (d > 0) & (sdf >= -trunc)
        if not upd.any():
            continue
        ii, jj, kk = ii[upd] + i0, jj[upd], kk[upd]
        x = np.minimum(np.maximum(sdf[upd] / trunc, -1.0), 1.0)
        wv = weight[ii, jj, kk].astype(np.float64)
        tv = tsdf[ii, jj, kk].astype(np.float64)
        tsdf[ii, jj, kk] = ((wv * tv + x) / (wv + 1.0)).astype(np.float32)
        if color is not None:
            pix = color_img[vv[upd], uu[upd]].astype(np.float64)
            cv = color[ii, jj, kk].astype(np.float64)
            color[ii, jj, kk] = ((wv[:, None] * cv + pix) / (wv[:, None] + 1.0)).astype(np.float32)
        weight[ii, jj, kk] = np.minimum(wv + 1.0, float(max_weight)).astype(np.float32)


def _trilinear(tsdf, weight, gx, gy, gz):
    """Sample the grid at fractional indices; valid needs 8 positive-weight corners."""
    nx, ny, nz = tsdf.shape
    i = np.floor(gx).astype(np.int64)
    j = np.floor(gy).astype(np.int64)
    k = np.floor(gz).astype(np.int64)
    inside = (i >= 0) & (i <= nx - 2) & (j >= 0) & (j <= ny - 2) & (k >= 0) & (k <= nz - 2)
    i = np.clip(i, 0, nx - 2)
    j = np.clip(j, 0, ny - 2)
    k = np.clip(k, 0, nz - 2)
    fx = gx - i
    fy = gy - j
    fz = gz - k
    c = {}
    valid = inside.copy()
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                c[di, dj, dk] = tsdf[i + di, j + dj, k + dk].astype(np.float64)
                valid &= weight[i + di, j + dj, k + dk] > 0
    c00 = c[0, 0, 0] * (1.0 - fx) + c[1, 0, 0] * fx
    c01 = c[0, 0, 1] * (1.0 - fx) + c[1, 0, 1] * fx
    c10 = c[0, 1, 0] * (1.0 - fx) + c[1, 1, 0] * fx
    c11 = c[0, 1, 1] * (1.0 - fx) + c[1, 1, 1] * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz, valid


def tsdf_raycast(tsdf, weight, origin, voxel_size, trunc, cam_center, dirs, max_range):
    """March rays through the TSDF at step 0.5*truncation until a +/- sign
    change, then refine the hit by linear interpolation. Returns per-ray hit
    distance t, 0 on miss."""
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    cam = np.asarray(cam_center, dtype=np.float64).reshape(3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = dirs.shape[0]
    nx, ny, nz = tsdf.shape
    bmax = origin + voxel_size * np.array([nx - 1, ny - 1, nz - 1])

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (origin - cam) * inv
        t2 = (bmax - cam) * inv
    tlo = np.fmin(t1, t2)
    thi = np.fmax(t1, t2)
    tmin = np.maximum(tlo.max(axis=1), 0.0)
    tmax = np.minimum(thi.min(axis=1), max_range)

    step = 0.5 * trunc
    result = np.zeros(n)
    active = tmax >= tmin
    prev_val = np.zeros(n)
    prev_t = np.zeros(n)
    have_prev = np.zeros(n, dtype=bool)
    max_iters = int(np.ceil(max_range / step)) + 2
    for it in range(max_iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        t = tmin[idx] + it * step
        done = t > tmax[idx]
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            continue
        t = t[~done]
        p = cam + t[:, None] * dirs[idx]
        gx = (p[:, 0] - origin[0]) / voxel_size
        gy = (p[:, 1] - origin[1]) / voxel_size
        gz = (p[:, 2] - origin[2]) / voxel_size
        val, ok = _trilinear(tsdf, weight, gx, gy, gz)
        crossed = ok & have_prev[idx] & (prev_val[idx] > 0.0) & (val <= 0.0)
        ci = idx[crossed]
        if ci.size:
            pv = prev_val[ci]
            result[ci] = prev_t[ci] + step * pv / (pv - val[crossed])
            active[ci] = False
        rest = ~crossed
        ri = idx[rest]
        have_prev[ri] = ok[rest]
        prev_val[ri] = np.where(ok[rest], val[rest], 0.0)
        prev_t[ri] = t[rest]
    return result


def marching_cubes(field, valid, iso):
    """Extract the iso-surface triangle mesh from a scalar lattice.

    Vertices are returned in index space (caller scales by voxel size), one
    per crossed lattice edge, ordered by (axis, i, j, k). Cells with any
    invalid corner are skipped. Triangles may reference vertices that a later
    degenerate-filter pass drops; callers prune unreferenced vertices.
    """
    f = np.asarray(field, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    nx, ny, nz = f.shape
    inside = f < iso

    verts_parts = []
    edge_ids = []
    counts = []
    for axis in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, -1)
        sl_hi[axis] = slice(1, None)
        sl_lo, sl_hi = tuple(sl_lo), tuple(sl_hi)
        crossed = (inside[sl_lo] != inside[sl_hi]) & valid[sl_lo] & valid[sl_hi]
        i, j, k = np.nonzero(crossed)
        v1 = f[sl_lo][i, j, k]
        v2 = f[sl_hi][i, j, k]
        t = (iso - v1) / (v2 - v1)
        pos = np.stack([i, j, k], axis=1).astype(np.float64)
        pos[:, axis] += t
        verts_parts.append(pos)
        shape = list(f.shape)
        shape[axis] -= 1
        index = np.full(shape, -1, dtype=np.int64)
        index[i, j, k] = np.arange(i.size)
        edge_ids.append(index)
        counts.append(i.size)
    base_y = counts[0]
    base_z = counts[0] + counts[1]
    verts = np.concatenate(verts_parts, axis=0) if counts else np.zeros((0, 3))

    cell_valid = valid[:-1, :-1, :-1]
    for di, dj, dk in ((1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)):
        cell_valid = cell_valid & valid[di:di + nx - 1, dj:dj + ny - 1, dk:dk + nz - 1]
    b = inside.astype(np.uint16)
    ci = (
        b[:-1, :-1, :-1]
        | (b[1:, :-1, :-1] << 1)
        | (b[1:, 1:, :-1] << 2)
        | (b[:-1, 1:, :-1] << 3)
        | (b[:-1, :-1, 1:] << 4)
        | (b[1:, :-1, 1:] << 5)
        | (b[1:, 1:, 1:] << 6)
        | (b[:-1, 1:, 1:] << 7)
    )
    active = cell_valid & (ci > 0) & (ci < 255)
    i, j, k = np.nonzero(active)
    if i.size == 0:
        return verts[:0], np.zeros((0, 3), dtype=np.int64)
    codes = ci[i, j, k]

    ex, ey, ez = edge_ids
    # Cell-local edge -> global vertex index, per the standard corner layout.
    cell_edges = np.stack(
        [
            ex[i, j, k],
            base_y + ey[i + 1, j, k],
            ex[i, j + 1, k],
            base_y + ey[i, j, k],
            ex[i, j, k + 1],
            base_y + ey[i + 1, j, k + 1],
            ex[i, j + 1, k + 1],
            base_y + ey[i, j, k + 1],
            base_z + ez[i, j, k],
            base_z + ez[i + 1, j, k],
            base_z + ez[i + 1, j + 1, k],
            base_z + ez[i, j + 1, k],
        ],
        axis=1,
    )
    rows = TRI_TABLE[codes]  # (ncells, 16)
    nt = np.count_nonzero(rows >= 0, axis=1) // 3
    tris = []
    max_t = int(nt.max()) if nt.size else 0
    for t_idx in range(max_t):
        sel = nt > t_idx
        e = rows[sel, 3 * t_idx:3 * t_idx + 3]
        tri = np.take_along_axis(cell_edges[sel], e, axis=1)
        order = np.nonzero(sel)[0]
        tris.append((order, tri))
    # Emit triangles grouped by cell in scan order, matching the compiled twin.
    total = int(nt.sum())
    out = np.empty((total, 3), dtype=np.int64)
    offsets = np.zeros(i.size + 1, dtype=np.int64)
    np.cumsum(nt, out=offsets[1:])
    for t_idx, (order, tri) in enumerate(tris):
        out[offsets[order] + t_idx] = tri
    return verts, out


def _moller_trumbore(orig, d, v0, v1, v2):
    """Vectorized ray-triangle intersection; returns t (inf when no hit)."""
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)
    det = (e1 * pvec).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = orig - v0
        u = (tvec * pvec).sum(axis=-1) * inv
        qvec = np.cross(tvec, e1)
        v = (d * qvec).sum(axis=-1) * inv
        t = (e2 * qvec).sum(axis=-1) * inv
    eps = 1e-12
    ok = (
        (np.abs(det) > 1e-14)
        & (u >= -eps)
        & (v >= -eps)
        & (u + v <= 1.0 + eps)
        & (t >= 0.0)
    )
    return np.where(ok, t, np.inf)


def bvh_raycast(nodes_min, nodes_max, node_left, node_right, leaf_start, leaf_count,
                order, verts, tris, origins, dirs):
    """Nearest ray-triangle hits through a flattened BVH.

    Returns (t, tri_index) per ray; t = inf and tri_index = -1 on miss. Both
    triangle faces are hit (no backface culling); boundary hits inclusive.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    t_best = np.full(n, np.inf)
    tri_best = np.full(n, -1, dtype=np.int64)
    if len(node_left) == 0:
        return t_best, tri_best

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs

    def visit(node, rays):
        if rays.size == 0:
            return
        t1 = (nodes_min[node] - origins[rays]) * inv[rays]
        t2 = (nodes_max[node] - origins[rays]) * inv[rays]
        tlo = np.fmin(t1, t2).max(axis=1)
        thi = np.fmax(t1, t2).min(axis=1)
        hit = (thi >= tlo) & (thi >= 0.0) & (tlo < t_best[rays])
        rays = rays[hit]
        if rays.size == 0:
            return
        if leaf_count[node] > 0:
            ids = order[leaf_start[node]:leaf_start[node] + leaf_count[node]]
            v0 = verts[tris[ids, 0]]
            v1 = verts[tris[ids, 1]]
            v2 = verts[tris[ids, 2]]
            t = _moller_trumbore(
                origins[rays, None, :], dirs[rays, None, :], v0[None], v1[None], v2[None]
            )
            j = np.argmin(t, axis=1)
            tmin = t[np.arange(rays.size), j]
            better = tmin < t_best[rays]
            upd = rays[better]
            t_best[upd] = tmin[better]
            tri_best[upd] = ids[j[better]]
        else:
            visit(node_left[node], rays)
            visit(node_right[node], rays)

    visit(0, np.arange(n))
    return t_best, tri_best
