# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Mirrors slamkit.kernels._python function for function; both backends evaluate
the same expression trees in the same order so results agree bitwise (modulo
argmin tie-breaking, which both resolve identically by scan order).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, floor, fmax, fmin, isnan, sqrt

from slamkit.mesh.mc_tables import TRI_TABLE

cnp.import_array()

BACKEND = "native"

cdef long[:, ::1] _TRI_TABLE = np.ascontiguousarray(TRI_TABLE, dtype=np.int64)

PRIM_ROOM = 0
PRIM_SPHERE = 1
PRIM_BOX = 2


cdef inline double _prim_sdf(const double[:, ::1] prims, Py_ssize_t p,
                             double x, double y, double z) noexcept nogil:
    cdef int kind = <int>prims[p, 0]
    cdef double dx = x - prims[p, 1]
    cdef double dy = y - prims[p, 2]
    cdef double dz = z - prims[p, 3]
    cdef double qx, qy, qz, outside, inside, d
    if kind == 1:  # sphere
        return sqrt(dx * dx + dy * dy + dz * dz) - prims[p, 4]
    qx = fabs(dx) - prims[p, 4]
    qy = fabs(dy) - prims[p, 5]
    qz = fabs(dz) - prims[p, 6]
    outside = sqrt(fmax(qx, 0.0) * fmax(qx, 0.0)
                   + fmax(qy, 0.0) * fmax(qy, 0.0)
                   + fmax(qz, 0.0) * fmax(qz, 0.0))
    inside = fmin(fmax(fmax(qx, qy), qz), 0.0)
    d = outside + inside
    if kind == 0:  # inverted box (room walls)
        return -d
    return d


cdef inline double _scene_sdf(const double[:, ::1] prims,
                              double x, double y, double z) noexcept nogil:
    cdef double d = INFINITY
    cdef Py_ssize_t p
    for p in range(prims.shape[0]):
        d = fmin(d, _prim_sdf(prims, p, x, y, z))
    return d


def sphere_trace(prims, origin, dirs, double max_range, double tol, int max_steps):
    cdef const double[:, ::1] pr = np.ascontiguousarray(prims, dtype=np.float64)
    cdef const double[::1] o = np.ascontiguousarray(origin, dtype=np.float64).reshape(3)
    cdef const double[:, ::1] d = np.ascontiguousarray(
        np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = d.shape[0]
    out = np.full(n, np.inf)
    cdef double[::1] res = out
    cdef Py_ssize_t i
    cdef int it
    cdef double t, dist
    with nogil:
        for i in range(n):
            t = 0.0
            for it in range(max_steps):
                dist = _scene_sdf(pr, o[0] + t * d[i, 0], o[1] + t * d[i, 1],
                                  o[2] + t * d[i, 2])
                if dist < tol:
                    res[i] = t
                    break
                t = t + dist
                if t > max_range:
                    break
    return out


def tsdf_integrate(float[:, :, ::1] tsdf, float[:, :, ::1] weight, color,
                   origin, double voxel_size, double trunc, double max_weight,
                   depth, color_img, double fx, double fy, double cx, double cy, t_cw):
    cdef const double[::1] org = np.ascontiguousarray(origin, dtype=np.float64).reshape(3)
    cdef const double[:, ::1] dep = np.ascontiguousarray(depth, dtype=np.float64)
    cdef const double[:, ::1] r = np.ascontiguousarray(t_cw, dtype=np.float64)
    cdef bint with_color = color is not None
    cdef float[:, :, :, ::1] col
    cdef const double[:, :, ::1] img
    if with_color:
        col = color
        img = np.ascontiguousarray(color_img, dtype=np.float64)
    cdef Py_ssize_t nx = tsdf.shape[0], ny = tsdf.shape[1], nz = tsdf.shape[2]
    cdef Py_ssize_t h = dep.shape[0], w = dep.shape[1]
    cdef Py_ssize_t i, j, k, u, v
    cdef double px, py, pz, xc, yc, zc, uf, vf, dval, sdf, x, wv, tv
    with nogil:
        for i in range(nx):
            px = org[0] + voxel_size * i
            for j in range(ny):
                py = org[1] + voxel_size * j
                for k in range(nz):
                    pz = org[2] + voxel_size * k
                    zc = px * r[2, 0] + py * r[2, 1] + pz * r[2, 2] + r[2, 3]
                    if zc <= 1e-6:
                        continue
                    xc = px * r[0, 0] + py * r[0, 1] + pz * r[0, 2] + r[0, 3]
                    yc = px * r[1, 0] + py * r[1, 1] + pz * r[1, 2] + r[1, 3]
                    uf = floor(fx * xc / zc + cx + 0.5)
                    vf = floor(fy * yc / zc + cy + 0.5)
                    if uf < 0 or uf >= w or vf < 0 or vf >= h:
                        continue
                    u = <Py_ssize_t>uf
                    v = <Py_ssize_t>vf
                    dval = dep[v, u]
                    sdf = dval - zc
                    if dval <= 0 or sdf < -trunc:
                        continue
                    x = fmin(fmax(sdf / trunc, -1.0), 1.0)
                    wv = <double>weight[i, j, k]
                    tv = <double>tsdf[i, j, k]
                    tsdf[i, j, k] = <float>((wv * tv + x) / (wv + 1.0))
                    if with_color:
                        col[i, j, k, 0] = <float>((wv * <double>col[i, j, k, 0] + img[v, u, 0]) / (wv + 1.0))
                        col[i, j, k, 1] = <float>((wv * <double>col[i, j, k, 1] + img[v, u, 1]) / (wv + 1.0))
                        col[i, j, k, 2] = <float>((wv * <double>col[i, j, k, 2] + img[v, u, 2]) / (wv + 1.0))
                    weight[i, j, k] = <float>fmin(wv + 1.0, max_weight)


cdef inline double _trilinear_one(const float[:, :, ::1] tsdf, const float[:, :, ::1] weight,
                                  double gx, double gy, double gz, bint* ok) noexcept nogil:
    cdef Py_ssize_t nx = tsdf.shape[0], ny = tsdf.shape[1], nz = tsdf.shape[2]
    cdef double fi = floor(gx), fj = floor(gy), fk = floor(gz)
    cdef Py_ssize_t i = <Py_ssize_t>fi, j = <Py_ssize_t>fj, k = <Py_ssize_t>fk
    cdef bint inside = (fi >= 0 and i <= nx - 2 and fj >= 0 and j <= ny - 2
                        and fk >= 0 and k <= nz - 2)
    if i < 0: i = 0
    if i > nx - 2: i = nx - 2
    if j < 0: j = 0
    if j > ny - 2: j = ny - 2
    if k < 0: k = 0
    if k > nz - 2: k = nz - 2
    cdef double ffx = gx - i, ffy = gy - j, ffz = gz - k
    ok[0] = inside
    if inside:
        ok[0] = (weight[i, j, k] > 0 and weight[i + 1, j, k] > 0
                 and weight[i, j + 1, k] > 0 and weight[i + 1, j + 1, k] > 0
                 and weight[i, j, k + 1] > 0 and weight[i + 1, j, k + 1] > 0
                 and weight[i, j + 1, k + 1] > 0 and weight[i + 1, j + 1, k + 1] > 0)
    cdef double c00 = (<double>tsdf[i, j, k]) * (1.0 - ffx) + (<double>tsdf[i + 1, j, k]) * ffx
    cdef double c01 = (<double>tsdf[i, j, k + 1]) * (1.0 - ffx) + (<double>tsdf[i + 1, j, k + 1]) * ffx
    cdef double c10 = (<double>tsdf[i, j + 1, k]) * (1.0 - ffx) + (<double>tsdf[i + 1, j + 1, k]) * ffx
    cdef double c11 = (<double>tsdf[i, j + 1, k + 1]) * (1.0 - ffx) + (<double>tsdf[i + 1, j + 1, k + 1]) * ffx
    cdef double c0 = c00 * (1.0 - ffy) + c10 * ffy
    cdef double c1 = c01 * (1.0 - ffy) + c11 * ffy
    return c0 * (1.0 - ffz) + c1 * ffz


def tsdf_raycast(const float[:, :, ::1] tsdf, const float[:, :, ::1] weight,
                 origin, double voxel_size, double trunc,
                 cam_center, dirs, double max_range):
    cdef const double[::1] org = np.ascontiguousarray(origin, dtype=np.float64).reshape(3)
    cdef const double[::1] cam = np.ascontiguousarray(cam_center, dtype=np.float64).reshape(3)
    cdef const double[:, ::1] d = np.ascontiguousarray(
        np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t nx = tsdf.shape[0], ny = tsdf.shape[1], nz = tsdf.shape[2]
    out = np.zeros(n)
    cdef double[::1] res = out
    cdef double bx = org[0] + voxel_size * (nx - 1)
    cdef double by = org[1] + voxel_size * (ny - 1)
    cdef double bz = org[2] + voxel_size * (nz - 1)
    cdef double step = 0.5 * trunc
    cdef Py_ssize_t i
    cdef int it, max_iters
    cdef double inv0, inv1, inv2, t1, t2, lo0, lo1, lo2, hi0, hi1, hi2
    cdef double tmin, tmax, t, px, py, pz, val, prev_val, prev_t
    cdef bint ok, have_prev
    max_iters = <int>(np.ceil(max_range / step)) + 2
    with nogil:
        for i in range(n):
            inv0 = 1.0 / d[i, 0]
            inv1 = 1.0 / d[i, 1]
            inv2 = 1.0 / d[i, 2]
            t1 = (org[0] - cam[0]) * inv0
            t2 = (bx - cam[0]) * inv0
            lo0 = fmin(t1, t2); hi0 = fmax(t1, t2)
            t1 = (org[1] - cam[1]) * inv1
            t2 = (by - cam[1]) * inv1
            lo1 = fmin(t1, t2); hi1 = fmax(t1, t2)
            t1 = (org[2] - cam[2]) * inv2
            t2 = (bz - cam[2]) * inv2
            lo2 = fmin(t1, t2); hi2 = fmax(t1, t2)
            if isnan(lo0) or isnan(lo1) or isnan(lo2) or isnan(hi0) or isnan(hi1) or isnan(hi2):
                continue  # matches the NaN-propagating reduction in the numpy twin
            tmin = lo0
            if lo1 > tmin: tmin = lo1
            if lo2 > tmin: tmin = lo2
            if tmin < 0.0: tmin = 0.0
            tmax = hi0
            if hi1 < tmax: tmax = hi1
            if hi2 < tmax: tmax = hi2
            if tmax > max_range: tmax = max_range
            if tmax < tmin:
                continue
            have_prev = False
            prev_val = 0.0
            prev_t = 0.0
            for it in range(max_iters):
                t = tmin + it * step
                if t > tmax:
                    break
                px = cam[0] + t * d[i, 0]
                py = cam[1] + t * d[i, 1]
                pz = cam[2] + t * d[i, 2]
                val = _trilinear_one(tsdf, weight,
                                     (px - org[0]) / voxel_size,
                                     (py - org[1]) / voxel_size,
                                     (pz - org[2]) / voxel_size, &ok)
                if ok and have_prev and prev_val > 0.0 and val <= 0.0:
                    res[i] = prev_t + step * prev_val / (prev_val - val)
                    break
                have_prev = ok
                prev_val = val if ok else 0.0
                prev_t = t
    return out


def marching_cubes(const double[:, :, ::1] field, valid, double iso):
    cdef const cnp.uint8_t[:, :, ::1] vmask = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef Py_ssize_t nx = field.shape[0], ny = field.shape[1], nz = field.shape[2]
    cdef Py_ssize_t i, j, k, axis
    cdef long nvert = 0, ntri = 0
    cdef double v1, v2, t

    ex = np.full((max(nx - 1, 0), ny, nz), -1, dtype=np.int64)
    ey = np.full((nx, max(ny - 1, 0), nz), -1, dtype=np.int64)
    ez = np.full((nx, ny, max(nz - 1, 0)), -1, dtype=np.int64)
    cdef long[:, :, ::1] exv = ex, eyv = ey, ezv = ez

    # Pass 1: enumerate crossed lattice edges axis by axis in scan order.
    with nogil:
        for i in range(nx - 1):
            for j in range(ny):
                for k in range(nz):
                    if (field[i, j, k] < iso) != (field[i + 1, j, k] < iso):
                        if vmask[i, j, k] and vmask[i + 1, j, k]:
                            exv[i, j, k] = nvert
                            nvert += 1
        for i in range(nx):
            for j in range(ny - 1):
                for k in range(nz):
                    if (field[i, j, k] < iso) != (field[i, j + 1, k] < iso):
                        if vmask[i, j, k] and vmask[i, j + 1, k]:
                            eyv[i, j, k] = nvert
                            nvert += 1
        for i in range(nx):
            for j in range(ny):
                for k in range(nz - 1):
                    if (field[i, j, k] < iso) != (field[i, j, k + 1] < iso):
                        if vmask[i, j, k] and vmask[i, j, k + 1]:
                            ezv[i, j, k] = nvert
                            nvert += 1

    verts = np.empty((nvert, 3))
    cdef double[:, ::1] vv = verts
    cdef long idx
    with nogil:
        for i in range(nx - 1):
            for j in range(ny):
                for k in range(nz):
                    idx = exv[i, j, k]
                    if idx >= 0:
                        v1 = field[i, j, k]; v2 = field[i + 1, j, k]
                        t = (iso - v1) / (v2 - v1)
                        vv[idx, 0] = i + t; vv[idx, 1] = j; vv[idx, 2] = k
        for i in range(nx):
            for j in range(ny - 1):
                for k in range(nz):
                    idx = eyv[i, j, k]
                    if idx >= 0:
                        v1 = field[i, j, k]; v2 = field[i, j + 1, k]
                        t = (iso - v1) / (v2 - v1)
                        vv[idx, 0] = i; vv[idx, 1] = j + t; vv[idx, 2] = k
        for i in range(nx):
            for j in range(ny):
                for k in range(nz - 1):
                    idx = ezv[i, j, k]
                    if idx >= 0:
                        v1 = field[i, j, k]; v2 = field[i, j, k + 1]
                        t = (iso - v1) / (v2 - v1)
                        vv[idx, 0] = i; vv[idx, 1] = j; vv[idx, 2] = k + t

    # Pass 2: count triangles of active cells, then emit them in scan order.
    cdef int code, tt
    cdef long gv[12]
    with nogil:
        for i in range(nx - 1):
            for j in range(ny - 1):
                for k in range(nz - 1):
                    if not (vmask[i, j, k] and vmask[i + 1, j, k] and vmask[i + 1, j + 1, k]
                            and vmask[i, j + 1, k] and vmask[i, j, k + 1] and vmask[i + 1, j, k + 1]
                            and vmask[i + 1, j + 1, k + 1] and vmask[i, j + 1, k + 1]):
                        continue
                    code = _cube_code(field, iso, i, j, k)
                    if code == 0 or code == 255:
                        continue
                    for tt in range(5):
                        if _TRI_TABLE[code, 3 * tt] < 0:
                            break
                        ntri += 1

    tris = np.empty((ntri, 3), dtype=np.int64)
    cdef long[:, ::1] tv = tris
    cdef long tcount = 0
    cdef int e
    with nogil:
        for i in range(nx - 1):
            for j in range(ny - 1):
                for k in range(nz - 1):
                    if not (vmask[i, j, k] and vmask[i + 1, j, k] and vmask[i + 1, j + 1, k]
                            and vmask[i, j + 1, k] and vmask[i, j, k + 1] and vmask[i + 1, j, k + 1]
                            and vmask[i + 1, j + 1, k + 1] and vmask[i, j + 1, k + 1]):
                        continue
                    code = _cube_code(field, iso, i, j, k)
                    if code == 0 or code == 255:
                        continue
                    gv[0] = exv[i, j, k]
                    gv[1] = eyv[i + 1, j, k]
                    gv[2] = exv[i, j + 1, k]
                    gv[3] = eyv[i, j, k]
                    gv[4] = exv[i, j, k + 1]
                    gv[5] = eyv[i + 1, j, k + 1]
                    gv[6] = exv[i, j + 1, k + 1]
                    gv[7] = eyv[i, j, k + 1]
                    gv[8] = ezv[i, j, k]
                    gv[9] = ezv[i + 1, j, k]
                    gv[10] = ezv[i + 1, j + 1, k]
                    gv[11] = ezv[i, j + 1, k]
                    for tt in range(5):
                        e = <int>_TRI_TABLE[code, 3 * tt]
                        if e < 0:
                            break
                        tv[tcount, 0] = gv[e]
                        tv[tcount, 1] = gv[<int>_TRI_TABLE[code, 3 * tt + 1]]
                        tv[tcount, 2] = gv[<int>_TRI_TABLE[code, 3 * tt + 2]]
                        tcount += 1
    return verts, tris


cdef inline int _cube_code(const double[:, :, ::1] f, double iso,
                           Py_ssize_t i, Py_ssize_t j, Py_ssize_t k) noexcept nogil:
    cdef int code = 0
    if f[i, j, k] < iso: code |= 1
    if f[i + 1, j, k] < iso: code |= 2
    if f[i + 1, j + 1, k] < iso: code |= 4
    if f[i, j + 1, k] < iso: code |= 8
    if f[i, j, k + 1] < iso: code |= 16
    if f[i + 1, j, k + 1] < iso: code |= 32
    if f[i + 1, j + 1, k + 1] < iso: code |= 64
    if f[i, j + 1, k + 1] < iso: code |= 128
    return code


def bvh_raycast(nodes_min, nodes_max, node_left, node_right, leaf_start, leaf_count,
                order, verts, tris, origins, dirs):
    cdef const double[:, ::1] nmin = np.ascontiguousarray(nodes_min, dtype=np.float64)
    cdef const double[:, ::1] nmax = np.ascontiguousarray(nodes_max, dtype=np.float64)
    cdef const long[::1] left = np.ascontiguousarray(node_left, dtype=np.int64)
    cdef const long[::1] right = np.ascontiguousarray(node_right, dtype=np.int64)
    cdef const long[::1] start = np.ascontiguousarray(leaf_start, dtype=np.int64)
    cdef const long[::1] count = np.ascontiguousarray(leaf_count, dtype=np.int64)
    cdef const long[::1] ordv = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[:, ::1] v = np.ascontiguousarray(verts, dtype=np.float64)
    cdef const long[:, ::1] f = np.ascontiguousarray(tris, dtype=np.int64)
    cdef const double[:, ::1] o = np.ascontiguousarray(
        np.asarray(origins, dtype=np.float64).reshape(-1, 3))
    cdef const double[:, ::1] d = np.ascontiguousarray(
        np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = o.shape[0]
    t_out = np.full(n, np.inf)
    tri_out = np.full(n, -1, dtype=np.int64)
    cdef double[::1] tb = t_out
    cdef long[::1] trib = tri_out
    if left.shape[0] == 0:
        return t_out, tri_out

    cdef long stack[128]
    cdef int sp
    cdef Py_ssize_t i, node, m
    cdef long tid
    cdef double inv0, inv1, inv2, t1, t2, lo0, lo1, lo2, hi0, hi1, hi2, tlo, thi
    cdef double e1x, e1y, e1z, e2x, e2y, e2z, px, py, pz, det, inv, tvx, tvy, tvz
    cdef double uu, vv2, qx, qy, qz, tt
    cdef double eps = 1e-12
    with nogil:
        for i in range(n):
            inv0 = 1.0 / d[i, 0]
            inv1 = 1.0 / d[i, 1]
            inv2 = 1.0 / d[i, 2]
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                t1 = (nmin[node, 0] - o[i, 0]) * inv0
                t2 = (nmax[node, 0] - o[i, 0]) * inv0
                lo0 = fmin(t1, t2); hi0 = fmax(t1, t2)
                t1 = (nmin[node, 1] - o[i, 1]) * inv1
                t2 = (nmax[node, 1] - o[i, 1]) * inv1
                lo1 = fmin(t1, t2); hi1 = fmax(t1, t2)
                t1 = (nmin[node, 2] - o[i, 2]) * inv2
                t2 = (nmax[node, 2] - o[i, 2]) * inv2
                lo2 = fmin(t1, t2); hi2 = fmax(t1, t2)
                if isnan(lo0) or isnan(lo1) or isnan(lo2) or isnan(hi0) or isnan(hi1) or isnan(hi2):
                    continue
                tlo = lo0
                if lo1 > tlo: tlo = lo1
                if lo2 > tlo: tlo = lo2
                thi = hi0
                if hi1 < thi: thi = hi1
                if hi2 < thi: thi = hi2
                if thi < tlo or thi < 0.0 or tlo >= tb[i]:
                    continue
                if count[node] > 0:
                    for m in range(start[node], start[node] + count[node]):
                        tid = ordv[m]
                        e1x = v[f[tid, 1], 0] - v[f[tid, 0], 0]
                        e1y = v[f[tid, 1], 1] - v[f[tid, 0], 1]
                        e1z = v[f[tid, 1], 2] - v[f[tid, 0], 2]
                        e2x = v[f[tid, 2], 0] - v[f[tid, 0], 0]
                        e2y = v[f[tid, 2], 1] - v[f[tid, 0], 1]
                        e2z = v[f[tid, 2], 2] - v[f[tid, 0], 2]
                        px = d[i, 1] * e2z - d[i, 2] * e2y
                        py = d[i, 2] * e2x - d[i, 0] * e2z
                        pz = d[i, 0] * e2y - d[i, 1] * e2x
                        det = e1x * px + e1y * py + e1z * pz
                        if fabs(det) <= 1e-14:
                            continue
                        inv = 1.0 / det
                        tvx = o[i, 0] - v[f[tid, 0], 0]
                        tvy = o[i, 1] - v[f[tid, 0], 1]
                        tvz = o[i, 2] - v[f[tid, 0], 2]
                        uu = (tvx * px + tvy * py + tvz * pz) * inv
                        if uu < -eps:
                            continue
                        qx = tvy * e1z - tvz * e1y
                        qy = tvz * e1x - tvx * e1z
                        qz = tvx * e1y - tvy * e1x
                        vv2 = (d[i, 0] * qx + d[i, 1] * qy + d[i, 2] * qz) * inv
                        if vv2 < -eps or uu + vv2 > 1.0 + eps:
                            continue
                        tt = (e2x * qx + e2y * qy + e2z * qz) * inv
                        if tt >= 0.0 and tt < tb[i]:
                            tb[i] = tt
                            trib[i] = tid
                else:
                    stack[sp] = right[node]
                    sp += 1
                    stack[sp] = left[node]
                    sp += 1
    return t_out, tri_out
