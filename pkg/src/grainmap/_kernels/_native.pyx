# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot kernels.

This file mirrors pure.py expression for expression: identical arithmetic
trees, identical candidate orderings, no libm calls beyond sqrt/floor/ceil/
fabs, so the two backends produce bit-identical results.  Keep them in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, fabs, floor, sqrt

cnp.import_array()

BACKEND = "native"

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32
ctypedef cnp.uint8_t u8


cdef inline Py_ssize_t _clampi(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline double _fmin(double a, double b) nogil:
    return a if a < b else b


cdef inline double _fmax(double a, double b) nogil:
    return a if a > b else b


cdef inline int _is_boundary(const double* qa, const double* qb,
                             const double* srows, double cos_half) nogil:
    """1 when max_s |scalar variant| <= cos_half (early exit otherwise)."""
    cdef double caw = qa[0]
    cdef double cax = -qa[1]
    cdef double cay = -qa[2]
    cdef double caz = -qa[3]
    cdef double bw = qb[0]
    cdef double bx = qb[1]
    cdef double by = qb[2]
    cdef double bz = qb[3]
    cdef double rw = caw * bw - cax * bx - cay * by - caz * bz
    cdef double rx = caw * bx + cax * bw + cay * bz - caz * by
    cdef double ry = caw * by - cax * bz + cay * bw + caz * bx
    cdef double rz = caw * bz + cax * by - cay * bx + caz * bw
    cdef Py_ssize_t s
    cdef double d
    for s in range(24):
        d = srows[4 * s] * rw + srows[4 * s + 1] * rx \
            + srows[4 * s + 2] * ry + srows[4 * s + 3] * rz
        if fabs(d) > cos_half:
            return 0
    return 1


cdef inline double _maxdot_full(const double* qa, const double* qb,
                                const double* srows) nogil:
    cdef double caw = qa[0]
    cdef double cax = -qa[1]
    cdef double cay = -qa[2]
    cdef double caz = -qa[3]
    cdef double bw = qb[0]
    cdef double bx = qb[1]
    cdef double by = qb[2]
    cdef double bz = qb[3]
    cdef double rw = caw * bw - cax * bx - cay * by - caz * bz
    cdef double rx = caw * bx + cax * bw + cay * bz - caz * by
    cdef double ry = caw * by - cax * bz + cay * bw + caz * bx
    cdef double rz = caw * bz + cax * by - cay * bx + caz * bw
    cdef double m = fabs(srows[0] * rw + srows[1] * rx + srows[2] * ry + srows[3] * rz)
    cdef double d
    cdef Py_ssize_t s
    for s in range(1, 24):
        d = srows[4 * s] * rw + srows[4 * s + 1] * rx \
            + srows[4 * s + 2] * ry + srows[4 * s + 3] * rz
        if fabs(d) > m:
            m = fabs(d)
    return m


def dis_scan(double[:, ::1] pos, double[:, ::1] quat, double[:, ::1] eps_pos,
             i64[::1] eps_owner, i64[::1] cell_start, i64[::1] cell_entries,
             double[::1] grid_min, i64[::1] dims, double width, double radius,
             double cos_half, double[:, ::1] srows, Py_ssize_t i0, Py_ssize_t i1):
    cdef Py_ssize_t n = i1 - i0
    dist_arr = np.zeros(n, np.float64)
    found_arr = np.zeros(n, np.uint8)
    cdef double[::1] dist = dist_arr
    cdef u8[::1] found = found_arr
    cdef double r2 = radius * radius
    cdef Py_ssize_t k, i, cx, cy, cz, ox, oy, oz, e, ent, o
    cdef Py_ssize_t xlo, xhi, ylo, yhi, zlo, zhi
    cdef i64 cid
    cdef double px, py, pz, dx, dy, dz, d2, best_d2
    cdef Py_ssize_t best_e
    cdef i64 d1 = dims[1]
    cdef i64 d2i = dims[2]
    with nogil:
        for k in range(n):
            i = i0 + k
            px = pos[i, 0]
            py = pos[i, 1]
            pz = pos[i, 2]
            cx = _clampi(<Py_ssize_t>floor((px - grid_min[0]) / width), 0, dims[0] - 1)
            cy = _clampi(<Py_ssize_t>floor((py - grid_min[1]) / width), 0, dims[1] - 1)
            cz = _clampi(<Py_ssize_t>floor((pz - grid_min[2]) / width), 0, dims[2] - 1)
            xlo = _clampi(cx - 1, 0, dims[0] - 1)
            xhi = _clampi(cx + 1, 0, dims[0] - 1)
            ylo = _clampi(cy - 1, 0, dims[1] - 1)
            yhi = _clampi(cy + 1, 0, dims[1] - 1)
            zlo = _clampi(cz - 1, 0, dims[2] - 1)
            zhi = _clampi(cz + 1, 0, dims[2] - 1)
            best_d2 = INFINITY
            best_e = -1
            for ox in range(xlo, xhi + 1):
                for oy in range(ylo, yhi + 1):
                    for oz in range(zlo, zhi + 1):
                        cid = (ox * d1 + oy) * d2i + oz
                        for e in range(cell_start[cid], cell_start[cid + 1]):
                            ent = cell_entries[e]
                            if ent == i:
                                continue
                            dx = eps_pos[ent, 0] - px
                            dy = eps_pos[ent, 1] - py
                            dz = eps_pos[ent, 2] - pz
                            d2 = (dx * dx + dy * dy) + dz * dz
                            if d2 > r2:
                                continue
                            if best_e >= 0:
                                if d2 > best_d2:
                                    continue
                                if d2 == best_d2 and ent > best_e:
                                    continue
                            o = eps_owner[ent]
                            if _is_boundary(&quat[i, 0], &quat[o, 0],
                                            &srows[0, 0], cos_half):
                                best_d2 = d2
                                best_e = ent
            if best_e >= 0:
                dist[k] = sqrt(best_d2)
                found[k] = 1
    return dist_arr, found_arr


cdef Py_ssize_t _owners_over(double[:, ::1] pos, double[:, ::1] eps_pos,
                             i64[::1] eps_owner, i64[::1] cell_start,
                             i64[::1] cell_entries, double[::1] grid_min,
                             i64[::1] dims, double width, double r2,
                             Py_ssize_t i, u8[::1] flags,
                             i64[::1] touched) nogil:
    """Unique owners > i with an image within radius; unsorted, flags reset."""
    cdef double px = pos[i, 0]
    cdef double py = pos[i, 1]
    cdef double pz = pos[i, 2]
    cdef Py_ssize_t cx = _clampi(<Py_ssize_t>floor((px - grid_min[0]) / width), 0, dims[0] - 1)
    cdef Py_ssize_t cy = _clampi(<Py_ssize_t>floor((py - grid_min[1]) / width), 0, dims[1] - 1)
    cdef Py_ssize_t cz = _clampi(<Py_ssize_t>floor((pz - grid_min[2]) / width), 0, dims[2] - 1)
    cdef Py_ssize_t xlo = _clampi(cx - 1, 0, dims[0] - 1)
    cdef Py_ssize_t xhi = _clampi(cx + 1, 0, dims[0] - 1)
    cdef Py_ssize_t ylo = _clampi(cy - 1, 0, dims[1] - 1)
    cdef Py_ssize_t yhi = _clampi(cy + 1, 0, dims[1] - 1)
    cdef Py_ssize_t zlo = _clampi(cz - 1, 0, dims[2] - 1)
    cdef Py_ssize_t zhi = _clampi(cz + 1, 0, dims[2] - 1)
    cdef Py_ssize_t ox, oy, oz, e, ent, cnt = 0
    cdef i64 cid, o
    cdef double dx, dy, dz, d2
    for ox in range(xlo, xhi + 1):
        for oy in range(ylo, yhi + 1):
            for oz in range(zlo, zhi + 1):
                cid = (ox * dims[1] + oy) * dims[2] + oz
                for e in range(cell_start[cid], cell_start[cid + 1]):
                    ent = cell_entries[e]
                    o = eps_owner[ent]
                    if o <= i:
                        continue
                    dx = eps_pos[ent, 0] - px
                    dy = eps_pos[ent, 1] - py
                    dz = eps_pos[ent, 2] - pz
                    d2 = (dx * dx + dy * dy) + dz * dz
                    if d2 > r2:
                        continue
                    if flags[o] == 0:
                        flags[o] = 1
                        touched[cnt] = o
                        cnt += 1
    for e in range(cnt):
        flags[touched[e]] = 0
    return cnt


def graph_edges(double[:, ::1] pos, double[:, ::1] quat, double[:, ::1] eps_pos,
                i64[::1] eps_owner, i64[::1] cell_start, i64[::1] cell_entries,
                double[::1] grid_min, i64[::1] dims, double width, double radius,
                double[:, ::1] srows, Py_ssize_t i0, Py_ssize_t i1):
    cdef Py_ssize_t n_pts = pos.shape[0]
    flags_arr = np.zeros(n_pts, np.uint8)
    touched_arr = np.zeros(n_pts, np.int64)
    cdef u8[::1] flags = flags_arr
    cdef i64[::1] touched = touched_arr
    cdef double r2 = radius * radius
    cdef Py_ssize_t i, cnt, total = 0
    with nogil:
        for i in range(i0, i1):
            total += _owners_over(pos, eps_pos, eps_owner, cell_start,
                                  cell_entries, grid_min, dims, width, r2,
                                  i, flags, touched)
    u_arr = np.empty(total, np.int64)
    v_arr = np.empty(total, np.int64)
    d_arr = np.empty(total, np.float64)
    cdef i64[::1] uu = u_arr
    cdef i64[::1] vv = v_arr
    cdef double[::1] dd = d_arr
    cdef Py_ssize_t w = 0, a, b
    cdef i64 key
    with nogil:
        for i in range(i0, i1):
            cnt = _owners_over(pos, eps_pos, eps_owner, cell_start,
                               cell_entries, grid_min, dims, width, r2,
                               i, flags, touched)
            # insertion sort ascending
            for a in range(1, cnt):
                key = touched[a]
                b = a - 1
                while b >= 0 and touched[b] > key:
                    touched[b + 1] = touched[b]
                    b -= 1
                touched[b + 1] = key
            for a in range(cnt):
                uu[w] = i
                vv[w] = touched[a]
                dd[w] = _maxdot_full(&quat[i, 0], &quat[touched[a], 0], &srows[0, 0])
                w += 1
    return u_arr, v_arr, d_arr


def louvain_level(i64[::1] indptr, i64[::1] indices, double[::1] weights,
                  double[::1] k, i64[::1] order, i64[::1] labels, double m2):
    cdef Py_ssize_t n = labels.shape[0]
    sigma_arr = np.zeros(n, np.float64)
    comm_w_arr = np.zeros(n, np.float64)
    in_t_arr = np.zeros(n, np.uint8)
    touched_arr = np.zeros(n, np.int64)
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] comm_w = comm_w_arr
    cdef u8[::1] in_t = in_t_arr
    cdef i64[::1] touched = touched_arr
    cdef Py_ssize_t oi, i, e, t, nt
    cdef i64 c_old, c, best_c, j, moves = 0, sweep_moves
    cdef double best_gain, g, base_w
    with nogil:
        for i in range(n):
            sigma[labels[i]] += k[i]
        while True:
            sweep_moves = 0
            for oi in range(n):
                i = order[oi]
                c_old = labels[i]
                nt = 0
                for e in range(indptr[i], indptr[i + 1]):
                    j = indices[e]
                    if j == i:
                        continue
                    c = labels[j]
                    if in_t[c] == 0:
                        in_t[c] = 1
                        touched[nt] = c
                        nt += 1
                        comm_w[c] = 0.0
                    comm_w[c] += weights[e]
                sigma[c_old] -= k[i]
                if in_t[c_old]:
                    base_w = comm_w[c_old]
                else:
                    base_w = 0.0
                best_gain = base_w - (sigma[c_old] * k[i]) / m2
                best_c = c_old
                for t in range(nt):
                    c = touched[t]
                    if c == c_old:
                        continue
                    g = comm_w[c] - (sigma[c] * k[i]) / m2
                    if g > best_gain:
                        best_gain = g
                        best_c = c
                sigma[best_c] += k[i]
                labels[i] = best_c
                if best_c != c_old:
                    sweep_moves += 1
                for t in range(nt):
                    in_t[touched[t]] = 0
            moves += sweep_moves
            if sweep_moves == 0:
                break
    return int(moves)


cdef inline Py_ssize_t _find(i64* par, Py_ssize_t x) nogil:
    while par[x] != x:
        par[x] = par[par[x]]
        x = par[x]
    return x


def fixed_radius_components(double[:, ::1] pos, i64[::1] cell_start,
                            i64[::1] cell_entries, double[::1] grid_min,
                            i64[::1] dims, double width, double radius2):
    cdef Py_ssize_t m = pos.shape[0]
    par_arr = np.arange(m, dtype=np.int64)
    cdef i64[::1] par_mv = par_arr
    cdef i64* par = &par_mv[0] if m > 0 else NULL
    cdef Py_ssize_t i, cx, cy, cz, ox, oy, oz, e, ent, ra, rb
    cdef Py_ssize_t xlo, xhi, ylo, yhi, zlo, zhi
    cdef i64 cid
    cdef double px, py, pz, dx, dy, dz, d2
    with nogil:
        for i in range(m):
            px = pos[i, 0]
            py = pos[i, 1]
            pz = pos[i, 2]
            cx = _clampi(<Py_ssize_t>floor((px - grid_min[0]) / width), 0, dims[0] - 1)
            cy = _clampi(<Py_ssize_t>floor((py - grid_min[1]) / width), 0, dims[1] - 1)
            cz = _clampi(<Py_ssize_t>floor((pz - grid_min[2]) / width), 0, dims[2] - 1)
            xlo = _clampi(cx - 1, 0, dims[0] - 1)
            xhi = _clampi(cx + 1, 0, dims[0] - 1)
            ylo = _clampi(cy - 1, 0, dims[1] - 1)
            yhi = _clampi(cy + 1, 0, dims[1] - 1)
            zlo = _clampi(cz - 1, 0, dims[2] - 1)
            zhi = _clampi(cz + 1, 0, dims[2] - 1)
            for ox in range(xlo, xhi + 1):
                for oy in range(ylo, yhi + 1):
                    for oz in range(zlo, zhi + 1):
                        cid = (ox * dims[1] + oy) * dims[2] + oz
                        for e in range(cell_start[cid], cell_start[cid + 1]):
                            ent = cell_entries[e]
                            if ent <= i:
                                continue
                            dx = pos[ent, 0] - px
                            dy = pos[ent, 1] - py
                            dz = pos[ent, 2] - pz
                            d2 = (dx * dx + dy * dy) + dz * dz
                            if d2 > radius2:
                                continue
                            ra = _find(par, i)
                            rb = _find(par, ent)
                            if ra != rb:
                                if ra < rb:
                                    par[rb] = ra
                                else:
                                    par[ra] = rb
        for i in range(m):
            par[i] = _find(par, i)
    return par_arr


def voxel_nearest(double[:, ::1] cand, double[::1] origin, double dcell,
                  i64[::1] dims, double r_search):
    cdef Py_ssize_t nx = dims[0]
    cdef Py_ssize_t ny = dims[1]
    cdef Py_ssize_t nz = dims[2]
    best_arr = np.full(nx * ny * nz, -1, np.int64)
    bd2_arr = np.full(nx * ny * nz, np.inf, np.float64)
    cdef i64[::1] best = best_arr
    cdef double[::1] bd2 = bd2_arr
    cdef Py_ssize_t c, il, ih, jl, jh, kl, kh, ii, jj, kk
    cdef i64 flat
    cdef double x, y, z, cxv, cyv, czv, ddx, ddy, ddz, d2
    with nogil:
        for c in range(cand.shape[0]):
            x = cand[c, 0]
            y = cand[c, 1]
            z = cand[c, 2]
            il = <Py_ssize_t>ceil((x - r_search - origin[0]) / dcell - 0.5)
            ih = <Py_ssize_t>floor((x + r_search - origin[0]) / dcell - 0.5)
            jl = <Py_ssize_t>ceil((y - r_search - origin[1]) / dcell - 0.5)
            jh = <Py_ssize_t>floor((y + r_search - origin[1]) / dcell - 0.5)
            kl = <Py_ssize_t>ceil((z - r_search - origin[2]) / dcell - 0.5)
            kh = <Py_ssize_t>floor((z + r_search - origin[2]) / dcell - 0.5)
            if il < 0:
                il = 0
            if ih > nx - 1:
                ih = nx - 1
            if jl < 0:
                jl = 0
            if jh > ny - 1:
                jh = ny - 1
            if kl < 0:
                kl = 0
            if kh > nz - 1:
                kh = nz - 1
            if il > ih or jl > jh or kl > kh:
                continue
            for ii in range(il, ih + 1):
                cxv = origin[0] + (ii + 0.5) * dcell
                ddx = cxv - x
                for jj in range(jl, jh + 1):
                    cyv = origin[1] + (jj + 0.5) * dcell
                    ddy = cyv - y
                    for kk in range(kl, kh + 1):
                        czv = origin[2] + (kk + 0.5) * dcell
                        ddz = czv - z
                        d2 = ((ddx * ddx) + (ddy * ddy)) + (ddz * ddz)
                        flat = (ii * ny + jj) * nz + kk
                        if d2 < bd2[flat]:
                            bd2[flat] = d2
                            best[flat] = c
    return best_arr


def eikonal_sweep(double[:, :, ::1] phi, double h, double tol, Py_ssize_t max_rounds):
    cdef Py_ssize_t n1 = phi.shape[0] - 2
    cdef Py_ssize_t n2 = phi.shape[1] - 2
    cdef Py_ssize_t n3 = phi.shape[2] - 2
    cdef Py_ssize_t rounds = 0, r, d, ii, jj, kk, i, j, k
    cdef int sx, sy, sz
    cdef double md, am, ap, ax, ay, az, t1, t2, a, b, c, u, s, arg, cur, mag, diff
    with nogil:
        for r in range(max_rounds):
            md = 0.0
            for d in range(8):
                sx = 1 if (d & 4) == 0 else -1
                sy = 1 if (d & 2) == 0 else -1
                sz = 1 if (d & 1) == 0 else -1
                for ii in range(1, n1 + 1):
                    i = ii if sx > 0 else n1 + 1 - ii
                    for jj in range(1, n2 + 1):
                        j = jj if sy > 0 else n2 + 1 - jj
                        for kk in range(1, n3 + 1):
                            k = kk if sz > 0 else n3 + 1 - kk
                            am = fabs(phi[i - 1, j, k])
                            ap = fabs(phi[i + 1, j, k])
                            ax = _fmin(am, ap)
                            am = fabs(phi[i, j - 1, k])
                            ap = fabs(phi[i, j + 1, k])
                            ay = _fmin(am, ap)
                            am = fabs(phi[i, j, k - 1])
                            ap = fabs(phi[i, j, k + 1])
                            az = _fmin(am, ap)
                            t1 = _fmin(ax, ay)
                            t2 = _fmax(ax, ay)
                            a = _fmin(t1, az)
                            b = _fmin(t2, _fmax(t1, az))
                            c = _fmax(t2, az)
                            u = a + h
                            if u > b:
                                arg = 2.0 * h * h - (a - b) * (a - b)
                                u = 0.5 * ((a + b) + sqrt(arg))
                            if u > c:
                                s = (a + b) + c
                                arg = s * s - 3.0 * (((a * a + b * b) + c * c) - h * h)
                                u = (s + sqrt(arg)) / 3.0
                            cur = phi[i, j, k]
                            mag = fabs(cur)
                            if u < mag:
                                diff = mag - u
                                if diff > md:
                                    md = diff
                                phi[i, j, k] = -u if cur < 0 else u
            rounds += 1
            if md < tol:
                break
    return int(rounds)


# Voronoi cell clipping.  Buffer capacities; overflow flags the cell as
# degenerate (status 2) and the caller falls back to the pure backend for it.
cdef enum:
    MAXV = 4096
    MAXF = 128
    MAXFV = 64
    MAXX = 512
    MAXCP = 8


cdef struct Poly:
    double* verts     # MAXV * 3
    double* sv        # MAXV
    int nv
    int* fvid_a       # MAXF * MAXFV
    int* fn_a
    i64* fgen_a
    int* fvid_b
    int* fn_b
    i64* fgen_b
    int use_b         # which buffer currently holds the faces
    int nf
    int* lstamp       # MAXV
    int stamp
    int* cm_a
    int* cm_b
    int* cm_id
    int* ch_a
    int* ch_b
    u8* ch_used


cdef int _cut(Poly* P, double nx, double ny, double nz, double off, i64 tgen) nogil:
    """Clip by n.x <= off.  Returns 0 unchanged, 1 cut applied, 2 failed."""
    cdef int* fvid = P.fvid_b if P.use_b else P.fvid_a
    cdef int* fn = P.fn_b if P.use_b else P.fn_a
    cdef i64* fgen = P.fgen_b if P.use_b else P.fgen_a
    cdef int* fvid2 = P.fvid_a if P.use_b else P.fvid_b
    cdef int* fn2 = P.fn_a if P.use_b else P.fn_b
    cdef i64* fgen2 = P.fgen_a if P.use_b else P.fgen_b
    cdef Py_ssize_t f, e, m, t
    cdef int va, vb, ina, inb, n_live = 0, n_out = 0, vid, lo, hi
    cdef double tt, x, y, z
    for f in range(P.nv):
        P.sv[f] = ((nx * P.verts[3 * f] + ny * P.verts[3 * f + 1])
                   + nz * P.verts[3 * f + 2]) - off
    P.stamp += 1
    for f in range(P.nf):
        m = fn[f]
        for e in range(m):
            va = fvid[f * MAXFV + e]
            if P.lstamp[va] != P.stamp:
                P.lstamp[va] = P.stamp
                n_live += 1
                if P.sv[va] > 0.0:
                    n_out += 1
    if n_out == 0:
        return 0
    if n_out == n_live:
        return 2
    cdef int ncm = 0, nf2 = 0, nch = 0, c2, ncp, q, found
    cdef int cpbuf[MAXCP]
    for f in range(P.nf):
        m = fn[f]
        c2 = 0
        ncp = 0
        for e in range(m):
            va = fvid[f * MAXFV + e]
            vb = fvid[f * MAXFV + (e + 1 if e + 1 < m else 0)]
            ina = 1 if P.sv[va] <= 0.0 else 0
            inb = 1 if P.sv[vb] <= 0.0 else 0
            if ina:
                if c2 >= MAXFV:
                    return 2
                fvid2[nf2 * MAXFV + c2] = va
                c2 += 1
            if ina != inb:
                if va < vb:
                    lo = va
                    hi = vb
                else:
                    lo = vb
                    hi = va
                vid = -1
                for q in range(ncm):
                    if P.cm_a[q] == lo and P.cm_b[q] == hi:
                        vid = P.cm_id[q]
                        break
                if vid < 0:
                    if ncm >= MAXX or P.nv >= MAXV:
                        return 2
                    tt = P.sv[lo] / (P.sv[lo] - P.sv[hi])
                    x = P.verts[3 * lo] + tt * (P.verts[3 * hi] - P.verts[3 * lo])
                    y = P.verts[3 * lo + 1] + tt * (P.verts[3 * hi + 1] - P.verts[3 * lo + 1])
                    z = P.verts[3 * lo + 2] + tt * (P.verts[3 * hi + 2] - P.verts[3 * lo + 2])
                    vid = P.nv
                    P.verts[3 * vid] = x
                    P.verts[3 * vid + 1] = y
                    P.verts[3 * vid + 2] = z
                    P.sv[vid] = 0.0
                    P.nv += 1
                    P.cm_a[ncm] = lo
                    P.cm_b[ncm] = hi
                    P.cm_id[ncm] = vid
                    ncm += 1
                if c2 >= MAXFV:
                    return 2
                fvid2[nf2 * MAXFV + c2] = vid
                c2 += 1
                found = 0
                for q in range(ncp):
                    if cpbuf[q] == vid:
                        found = 1
                        break
                if found == 0:
                    if ncp >= MAXCP:
                        return 2
                    cpbuf[ncp] = vid
                    ncp += 1
        if c2 >= 3:
            if nf2 >= MAXF:
                return 2
            fn2[nf2] = c2
            fgen2[nf2] = fgen[f]
            nf2 += 1
        if ncp == 2:
            if nch >= MAXF:
                return 2
            P.ch_a[nch] = cpbuf[0]
            P.ch_b[nch] = cpbuf[1]
            nch += 1
        elif ncp > 2:
            return 2
    cdef int start, curv, nxt = -1, steps, deg, ci
    if nch >= 3:
        # every chord endpoint must have degree exactly 2
        for q in range(nch):
            deg = 0
            for ci in range(nch):
                if P.ch_a[ci] == P.ch_a[q] or P.ch_b[ci] == P.ch_a[q]:
                    deg += 1
            if deg != 2:
                return 2
            deg = 0
            for ci in range(nch):
                if P.ch_a[ci] == P.ch_b[q] or P.ch_b[ci] == P.ch_b[q]:
                    deg += 1
            if deg != 2:
                return 2
        if nf2 >= MAXF or nch > MAXFV:
            return 2
        for q in range(nch):
            P.ch_used[q] = 0
        start = P.ch_a[0]
        curv = start
        steps = 0
        while steps < nch:
            found = -1
            for ci in range(nch):
                if P.ch_used[ci]:
                    continue
                if P.ch_a[ci] == curv:
                    found = ci
                    nxt = P.ch_b[ci]
                    break
                if P.ch_b[ci] == curv:
                    found = ci
                    nxt = P.ch_a[ci]
                    break
            if found < 0:
                return 2
            P.ch_used[found] = 1
            fvid2[nf2 * MAXFV + steps] = curv
            steps += 1
            curv = nxt
        if curv != start:
            return 2
        fn2[nf2] = nch
        fgen2[nf2] = tgen
        nf2 += 1
    P.nf = nf2
    P.use_b = 0 if P.use_b else 1
    return 1


def voronoi_cells(double[:, ::1] cand, i64[::1] gen_idx, u8[::1] member_mask,
                  i64[::1] cell_start, i64[::1] cell_entries, double[::1] grid_min,
                  i64[::1] dims, double width, double[::1] box_lo,
                  double[::1] box_hi, double delta, double r0, double guard):
    cdef Py_ssize_t kcells = gen_idx.shape[0]
    cdef Py_ssize_t ncand = cand.shape[0]
    status_arr = np.zeros(kcells, np.int64)
    cdef i64[::1] status = status_arr

    verts_buf = np.zeros(MAXV * 3, np.float64)
    sv_buf = np.zeros(MAXV, np.float64)
    fvid_a_buf = np.zeros(MAXF * MAXFV, np.int32)
    fn_a_buf = np.zeros(MAXF, np.int32)
    fgen_a_buf = np.zeros(MAXF, np.int64)
    fvid_b_buf = np.zeros(MAXF * MAXFV, np.int32)
    fn_b_buf = np.zeros(MAXF, np.int32)
    fgen_b_buf = np.zeros(MAXF, np.int64)
    lstamp_buf = np.zeros(MAXV, np.int32)
    cm_a_buf = np.zeros(MAXX, np.int32)
    cm_b_buf = np.zeros(MAXX, np.int32)
    cm_id_buf = np.zeros(MAXX, np.int32)
    ch_a_buf = np.zeros(MAXF, np.int32)
    ch_b_buf = np.zeros(MAXF, np.int32)
    ch_used_buf = np.zeros(MAXF, np.uint8)

    cdef double[::1] verts_mv = verts_buf
    cdef double[::1] sv_mv = sv_buf
    cdef i32[::1] fvid_a_mv = fvid_a_buf
    cdef i32[::1] fn_a_mv = fn_a_buf
    cdef i64[::1] fgen_a_mv = fgen_a_buf
    cdef i32[::1] fvid_b_mv = fvid_b_buf
    cdef i32[::1] fn_b_mv = fn_b_buf
    cdef i64[::1] fgen_b_mv = fgen_b_buf
    cdef i32[::1] lstamp_mv = lstamp_buf
    cdef i32[::1] cm_a_mv = cm_a_buf
    cdef i32[::1] cm_b_mv = cm_b_buf
    cdef i32[::1] cm_id_mv = cm_id_buf
    cdef i32[::1] ch_a_mv = ch_a_buf
    cdef i32[::1] ch_b_mv = ch_b_buf
    cdef u8[::1] ch_used_mv = ch_used_buf

    cdef Poly P
    P.verts = &verts_mv[0]
    P.sv = &sv_mv[0]
    P.fvid_a = <int*>&fvid_a_mv[0]
    P.fn_a = <int*>&fn_a_mv[0]
    P.fgen_a = &fgen_a_mv[0]
    P.fvid_b = <int*>&fvid_b_mv[0]
    P.fn_b = <int*>&fn_b_mv[0]
    P.fgen_b = &fgen_b_mv[0]
    P.lstamp = <int*>&lstamp_mv[0]
    P.stamp = 0
    P.cm_a = <int*>&cm_a_mv[0]
    P.cm_b = <int*>&cm_b_mv[0]
    P.cm_id = <int*>&cm_id_mv[0]
    P.ch_a = <int*>&ch_a_mv[0]
    P.ch_b = <int*>&ch_b_mv[0]
    P.ch_used = &ch_used_mv[0]

    # gathered candidate scratch
    cd2_buf = np.zeros(ncand, np.float64)
    cid_buf = np.zeros(ncand, np.int64)
    cdef double[::1] cd2 = cd2_buf
    cdef i64[::1] cid = cid_buf

    fc_cell_out = []
    fc_nbr_out = []
    fc_loops_out = []

    cdef Py_ssize_t gi, g, t, e, f, m, pos_in, ngath
    cdef i64 keyi
    cdef double gx, gy, gz, dx, dy, dz, d2, r2far, q, d, pnx, pny, pnz
    cdef double mx, my, mz, off, r_gather
    cdef double g2 = guard * guard
    cdef int rc, failed, wall
    cdef int* fvid_cur
    cdef int* fn_cur
    cdef i64* fgen_cur

    for gi in range(kcells):
        g = gen_idx[gi]
        gx = cand[g, 0]
        gy = cand[g, 1]
        gz = cand[g, 2]
        # init box
        P.nv = 8
        for t in range(8):
            P.verts[3 * t] = box_lo[0] if (t & 4) == 0 else box_hi[0]
            P.verts[3 * t + 1] = box_lo[1] if (t & 2) == 0 else box_hi[1]
            P.verts[3 * t + 2] = box_lo[2] if (t & 1) == 0 else box_hi[2]
        P.use_b = 0
        P.nf = 6
        _init_box_faces(&P)
        r2far = 0.0
        for t in range(8):
            dx = P.verts[3 * t] - gx
            dy = P.verts[3 * t + 1] - gy
            dz = P.verts[3 * t + 2] - gz
            q = (dx * dx + dy * dy) + dz * dz
            if q > r2far:
                r2far = q
        failed = 0
        r_gather = r0
        ngath = _gather_sorted(cand, cell_start, cell_entries, grid_min, dims,
                               width, g, gx, gy, gz, r_gather, cd2, cid)
        pos_in = 0
        while True:
            if pos_in == ngath:
                if r_gather >= guard:
                    break
                r_gather = r_gather * 1.6
                if r_gather > guard:
                    r_gather = guard
                ngath = _gather_sorted(cand, cell_start, cell_entries, grid_min,
                                       dims, width, g, gx, gy, gz, r_gather,
                                       cd2, cid)
                continue
            t = cid[pos_in]
            d2 = cd2[pos_in]
            pos_in += 1
            if d2 <= 0.0:
                continue
            if d2 > 4.0 * r2far:
                break
            if d2 > g2:
                break
            d = sqrt(d2)
            pnx = (cand[t, 0] - gx) / d
            pny = (cand[t, 1] - gy) / d
            pnz = (cand[t, 2] - gz) / d
            mx = 0.5 * (gx + cand[t, 0])
            my = 0.5 * (gy + cand[t, 1])
            mz = 0.5 * (gz + cand[t, 2])
            off = ((pnx * mx + pny * my) + pnz * mz) - delta
            rc = _cut(&P, pnx, pny, pnz, off, t)
            if rc == 2:
                failed = 1
                break
            if rc == 1:
                r2far = _recompute_r2far(&P, gx, gy, gz)
        if failed:
            status[gi] = 2
            continue
        fvid_cur = P.fvid_b if P.use_b else P.fvid_a
        fn_cur = P.fn_b if P.use_b else P.fn_a
        fgen_cur = P.fgen_b if P.use_b else P.fgen_a
        wall = 0
        for f in range(P.nf):
            if fgen_cur[f] < 0:
                wall = 1
                break
        if 4.0 * r2far > g2 or wall:
            status[gi] = 1
            continue
        for f in range(P.nf):
            keyi = fgen_cur[f]
            if member_mask[keyi]:
                continue
            m = fn_cur[f]
            loop = np.empty((m, 3), np.float64)
            for e in range(m):
                t = fvid_cur[f * MAXFV + e]
                loop[e, 0] = P.verts[3 * t]
                loop[e, 1] = P.verts[3 * t + 1]
                loop[e, 2] = P.verts[3 * t + 2]
            fc_cell_out.append(gi)
            fc_nbr_out.append(int(keyi))
            fc_loops_out.append(loop)
    nf_total = len(fc_cell_out)
    fv_off = np.zeros(nf_total + 1, np.int64)
    for f in range(nf_total):
        fv_off[f + 1] = fv_off[f] + fc_loops_out[f].shape[0]
    if nf_total:
        fverts = np.concatenate(fc_loops_out, axis=0)
    else:
        fverts = np.empty((0, 3), np.float64)
    return (status_arr, np.array(fc_cell_out, np.int64),
            np.array(fc_nbr_out, np.int64), fv_off, fverts)


cdef void _init_box_faces(Poly* P) nogil:
    cdef int* fvid = P.fvid_a
    cdef int* fn = P.fn_a
    cdef i64* fgen = P.fgen_a
    cdef int f
    # corner id bits: x<<2 | y<<1 | z
    cdef int loops[6][4]
    loops[0][0] = 0; loops[0][1] = 1; loops[0][2] = 3; loops[0][3] = 2
    loops[1][0] = 4; loops[1][1] = 5; loops[1][2] = 7; loops[1][3] = 6
    loops[2][0] = 0; loops[2][1] = 1; loops[2][2] = 5; loops[2][3] = 4
    loops[3][0] = 2; loops[3][1] = 3; loops[3][2] = 7; loops[3][3] = 6
    loops[4][0] = 0; loops[4][1] = 2; loops[4][2] = 6; loops[4][3] = 4
    loops[5][0] = 1; loops[5][1] = 3; loops[5][2] = 7; loops[5][3] = 5
    for f in range(6):
        fn[f] = 4
        fgen[f] = -(f + 1)
        fvid[f * MAXFV] = loops[f][0]
        fvid[f * MAXFV + 1] = loops[f][1]
        fvid[f * MAXFV + 2] = loops[f][2]
        fvid[f * MAXFV + 3] = loops[f][3]


cdef double _recompute_r2far(Poly* P, double gx, double gy, double gz) nogil:
    cdef int* fvid = P.fvid_b if P.use_b else P.fvid_a
    cdef int* fn = P.fn_b if P.use_b else P.fn_a
    cdef double r2far = 0.0
    cdef double dx, dy, dz, q
    cdef int f, e, v
    P.stamp += 1
    for f in range(P.nf):
        for e in range(fn[f]):
            v = fvid[f * MAXFV + e]
            if P.lstamp[v] != P.stamp:
                P.lstamp[v] = P.stamp
                dx = P.verts[3 * v] - gx
                dy = P.verts[3 * v + 1] - gy
                dz = P.verts[3 * v + 2] - gz
                q = (dx * dx + dy * dy) + dz * dz
                if q > r2far:
                    r2far = q
    return r2far


cdef Py_ssize_t _gather_sorted(double[:, ::1] cand, i64[::1] cell_start,
                               i64[::1] cell_entries, double[::1] grid_min,
                               i64[::1] dims, double width, Py_ssize_t g,
                               double gx, double gy, double gz, double r,
                               double[::1] cd2, i64[::1] cid) nogil:
    """Candidates (excluding g) within r of the generator, (d^2, id) sorted."""
    cdef double r2 = r * r
    cdef Py_ssize_t xlo = _clampi(<Py_ssize_t>floor((gx - r - grid_min[0]) / width), 0, dims[0] - 1)
    cdef Py_ssize_t xhi = _clampi(<Py_ssize_t>floor((gx + r - grid_min[0]) / width), 0, dims[0] - 1)
    cdef Py_ssize_t ylo = _clampi(<Py_ssize_t>floor((gy - r - grid_min[1]) / width), 0, dims[1] - 1)
    cdef Py_ssize_t yhi = _clampi(<Py_ssize_t>floor((gy + r - grid_min[1]) / width), 0, dims[1] - 1)
    cdef Py_ssize_t zlo = _clampi(<Py_ssize_t>floor((gz - r - grid_min[2]) / width), 0, dims[2] - 1)
    cdef Py_ssize_t zhi = _clampi(<Py_ssize_t>floor((gz + r - grid_min[2]) / width), 0, dims[2] - 1)
    cdef Py_ssize_t ox, oy, oz, e, ent, cnt = 0, a, b
    cdef i64 cidx, keyi
    cdef double dx, dy, dz, d2, keyd
    for ox in range(xlo, xhi + 1):
        for oy in range(ylo, yhi + 1):
            for oz in range(zlo, zhi + 1):
                cidx = (ox * dims[1] + oy) * dims[2] + oz
                for e in range(cell_start[cidx], cell_start[cidx + 1]):
                    ent = cell_entries[e]
                    if ent == g:
                        continue
                    dx = cand[ent, 0] - gx
                    dy = cand[ent, 1] - gy
                    dz = cand[ent, 2] - gz
                    d2 = (dx * dx + dy * dy) + dz * dz
                    if d2 > r2:
                        continue
                    cd2[cnt] = d2
                    cid[cnt] = ent
                    cnt += 1
    for a in range(1, cnt):
        keyd = cd2[a]
        keyi = cid[a]
        b = a - 1
        while b >= 0 and (cd2[b] > keyd or (cd2[b] == keyd and cid[b] > keyi)):
            cd2[b + 1] = cd2[b]
            cid[b + 1] = cid[b]
            b -= 1
        cd2[b + 1] = keyd
        cid[b + 1] = keyi
    return cnt


cdef double _facet_dist(Py_ssize_t f, double px, double py, double pz,
                        i64[::1] fv_off, double[:, ::1] fverts,
                        double[:, ::1] v2d, double[:, ::1] v0,
                        double[:, ::1] nrm, double[:, ::1] e1,
                        double[:, ::1] e2, double[::1] btol) nogil:
    cdef Py_ssize_t o0 = fv_off[f]
    cdef Py_ssize_t c = fv_off[f + 1] - o0
    cdef double dn = ((px - v0[f, 0]) * nrm[f, 0] + (py - v0[f, 1]) * nrm[f, 1]) \
        + (pz - v0[f, 2]) * nrm[f, 2]
    cdef double fu = ((px - v0[f, 0]) * e1[f, 0] + (py - v0[f, 1]) * e1[f, 1]) \
        + (pz - v0[f, 2]) * e1[f, 2]
    cdef double fv = ((px - v0[f, 0]) * e2[f, 0] + (py - v0[f, 1]) * e2[f, 1]) \
        + (pz - v0[f, 2]) * e2[f, 2]
    cdef Py_ssize_t j, a, b
    cdef int inside = 1
    cdef double cru, crv, cr, dx, dy, dz, l2, t, cx, cy, cz, dd2
    cdef double best2 = INFINITY
    for j in range(c):
        a = o0 + j
        b = o0 + (j + 1 if j + 1 < c else 0)
        cru = v2d[b, 0] - v2d[a, 0]
        crv = v2d[b, 1] - v2d[a, 1]
        cr = cru * (fv - v2d[a, 1]) - crv * (fu - v2d[a, 0])
        if cr < -btol[f]:
            inside = 0
            break
    if inside:
        return fabs(dn)
    for j in range(c):
        a = o0 + j
        b = o0 + (j + 1 if j + 1 < c else 0)
        dx = fverts[b, 0] - fverts[a, 0]
        dy = fverts[b, 1] - fverts[a, 1]
        dz = fverts[b, 2] - fverts[a, 2]
        l2 = (dx * dx + dy * dy) + dz * dz
        if l2 > 0.0:
            t = (((px - fverts[a, 0]) * dx + (py - fverts[a, 1]) * dy)
                 + (pz - fverts[a, 2]) * dz) / l2
            if t >= 0.0 and t <= 1.0:
                cx = fverts[a, 0] + t * dx
                cy = fverts[a, 1] + t * dy
                cz = fverts[a, 2] + t * dz
                dd2 = ((px - cx) * (px - cx) + (py - cy) * (py - cy)) \
                    + (pz - cz) * (pz - cz)
                if dd2 < best2:
                    best2 = dd2
        dd2 = ((px - fverts[a, 0]) * (px - fverts[a, 0])
               + (py - fverts[a, 1]) * (py - fverts[a, 1])) \
            + (pz - fverts[a, 2]) * (pz - fverts[a, 2])
        if dd2 < best2:
            best2 = dd2
    return sqrt(best2)


cdef inline double _aabb_d2(Py_ssize_t nd, double px, double py, double pz,
                            double[:, ::1] node_lo, double[:, ::1] node_hi) nogil:
    cdef double ddx = 0.0, ddy = 0.0, ddz = 0.0
    if px < node_lo[nd, 0]:
        ddx = node_lo[nd, 0] - px
    elif px > node_hi[nd, 0]:
        ddx = px - node_hi[nd, 0]
    if py < node_lo[nd, 1]:
        ddy = node_lo[nd, 1] - py
    elif py > node_hi[nd, 1]:
        ddy = py - node_hi[nd, 1]
    if pz < node_lo[nd, 2]:
        ddz = node_lo[nd, 2] - pz
    elif pz > node_hi[nd, 2]:
        ddz = pz - node_hi[nd, 2]
    return (ddx * ddx + ddy * ddy) + ddz * ddz


def vor_distances(double[:, ::1] pts, i64[::1] fv_off, double[:, ::1] fverts,
                  double[:, ::1] v2d, double[:, ::1] v0, double[:, ::1] nrm,
                  double[:, ::1] e1, double[:, ::1] e2, double[::1] btol,
                  double[:, ::1] flo, double[:, ::1] fhi,
                  double[:, ::1] node_lo, double[:, ::1] node_hi,
                  i64[::1] node_left, i64[::1] node_right,
                  i64[::1] node_start, i64[::1] node_count, i64[::1] perm,
                  int use_bvh, Py_ssize_t i0, Py_ssize_t i1):
    cdef Py_ssize_t nf = fv_off.shape[0] - 1
    cdef Py_ssize_t n = i1 - i0
    out_arr = np.empty(n, np.float64)
    cdef double[::1] out = out_arr
    if nf == 0:
        out_arr.fill(np.inf)
        return out_arr
    visited_arr = np.zeros(nf, np.int64)
    cand_arr = np.zeros(nf, np.int64)
    cdef i64[::1] visited = visited_arr
    cdef i64[::1] candbuf = cand_arr
    cdef i64 tag = 0
    cdef Py_ssize_t kk, f, nd, sp, ci, ncand, t
    cdef double px, py, pz, best, rq, dval
    cdef int improved, full_scan
    cdef Py_ssize_t stack[128]
    with nogil:
        for kk in range(n):
            px = pts[i0 + kk, 0]
            py = pts[i0 + kk, 1]
            pz = pts[i0 + kk, 2]
            best = _facet_dist(0, px, py, pz, fv_off, fverts, v2d, v0, nrm,
                               e1, e2, btol)
            if use_bvh and nf > 1:
                tag += 1
                visited[0] = tag
                full_scan = 0
                while True:
                    rq = best
                    ncand = 0
                    sp = 1
                    stack[0] = 0
                    while sp > 0:
                        sp -= 1
                        nd = stack[sp]
                        if _aabb_d2(nd, px, py, pz, node_lo, node_hi) >= rq * rq:
                            continue
                        if node_left[nd] < 0:
                            for t in range(node_start[nd], node_start[nd] + node_count[nd]):
                                candbuf[ncand] = perm[t]
                                ncand += 1
                        else:
                            if sp >= 126:
                                full_scan = 1
                                break
                            stack[sp] = node_left[nd]
                            sp += 1
                            stack[sp] = node_right[nd]
                            sp += 1
                    if full_scan:
                        break
                    improved = 0
                    for ci in range(ncand):
                        f = candbuf[ci]
                        if visited[f] == tag:
                            continue
                        visited[f] = tag
                        dval = _facet_dist(f, px, py, pz, fv_off, fverts, v2d,
                                           v0, nrm, e1, e2, btol)
                        if dval < best:
                            best = dval
                            if best < 0.9 * rq:
                                improved = 1
                                break
                    if improved == 0:
                        break
                if full_scan:
                    for f in range(1, nf):
                        dval = _facet_dist(f, px, py, pz, fv_off, fverts, v2d,
                                           v0, nrm, e1, e2, btol)
                        if dval < best:
                            best = dval
            else:
                for f in range(1, nf):
                    dval = _facet_dist(f, px, py, pz, fv_off, fverts, v2d,
                                       v0, nrm, e1, e2, btol)
                    if dval < best:
                        best = dval
            out[kk] = best
    return out_arr
