"""Pure numpy implementations of the hot kernels.

This backend is both the fallback used when the compiled extension is
missing and the semantic reference for it.  Arithmetic is written to match
the C code operation for operation: same expression trees, same left-to-right
evaluation order, no transcendental calls inside the kernels (only +,-,*,/,
sqrt and comparisons, which IEEE 754 pins down exactly).  Keep the two
backends in sync when editing either one.

Conventions shared by both backends:

* cell indexes are CSR over a cubic bucket grid: ``cell_entries[cell_start[c]:
  cell_start[c+1]]`` lists point indices in cell ``c``, ascending.
* quaternions are scalar-first; ``srows`` is the 24-row table such that
  ``dot(srows[s], qa^-1 * qb)`` is the scalar part of the s-th symmetry
  variant, so ``max_s |dot|`` is the cosine of half the disorientation angle.
* candidate orderings are lexicographic by (squared distance, index), which
  makes every tie deterministic without any floating-point slack.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

BACKEND = "pure"


def _cell_coords(p, grid_min, width, dims):
    c = np.floor((p - grid_min) / width).astype(np.int64)
    return np.minimum(np.maximum(c, 0), dims - 1)


def _stencil_entries(p, cell_start, cell_entries, grid_min, dims, width):
    """Point indices in the 27 buckets around the bucket holding ``p``."""
    c = _cell_coords(p, grid_min, width, dims)
    xs = range(max(c[0] - 1, 0), min(c[0] + 2, dims[0]))
    ys = range(max(c[1] - 1, 0), min(c[1] + 2, dims[1]))
    zs = range(max(c[2] - 1, 0), min(c[2] + 2, dims[2]))
    chunks = []
    for cx in xs:
        for cy in ys:
            for cz in zs:
                cid = (cx * dims[1] + cy) * dims[2] + cz
                s, e = cell_start[cid], cell_start[cid + 1]
                if e > s:
                    chunks.append(cell_entries[s:e])
    if not chunks:
        return np.empty(0, np.int64)
    return np.concatenate(chunks)


def _maxdot(qa, qb, srows):
    """max_s |scalar(S_s * qa^-1 * qb)| for one qa against rows of qb."""
    caw = qa[0]
    cax = -qa[1]
    cay = -qa[2]
    caz = -qa[3]
    bw = qb[..., 0]
    bx = qb[..., 1]
    by = qb[..., 2]
    bz = qb[..., 3]
    rw = caw * bw - cax * bx - cay * by - caz * bz
    rx = caw * bx + cax * bw + cay * bz - caz * by
    ry = caw * by - cax * bz + cay * bw + caz * bx
    rz = caw * bz + cax * by - cay * bx + caz * bw
    m = np.abs(srows[0, 0] * rw + srows[0, 1] * rx + srows[0, 2] * ry + srows[0, 3] * rz)
    for s in range(1, srows.shape[0]):
        d = srows[s, 0] * rw + srows[s, 1] * rx + srows[s, 2] * ry + srows[s, 3] * rz
        m = np.maximum(m, np.abs(d))
    return m


def dis_scan(pos, quat, eps_pos, eps_owner, cell_start, cell_entries, grid_min,
             dims, width, radius, cos_half, srows, i0, i1):
    """Nearest boundary neighbour per point.

    For each point ``i`` in [i0, i1), scan extended-cloud entries within
    ``radius`` (self entry excluded) in (d^2, entry) order and record the
    distance to the first whose disorientation is at least the threshold,
    i.e. whose ``maxdot`` is <= ``cos_half``.
    """
    n = i1 - i0
    dist = np.zeros(n, np.float64)
    found = np.zeros(n, np.uint8)
    r2 = radius * radius
    for k in range(n):
        i = i0 + k
        ent = _stencil_entries(pos[i], cell_start, cell_entries, grid_min, dims, width)
        if ent.size == 0:
            continue
        dx = eps_pos[ent, 0] - pos[i, 0]
        dy = eps_pos[ent, 1] - pos[i, 1]
        dz = eps_pos[ent, 2] - pos[i, 2]
        d2 = (dx * dx + dy * dy) + dz * dz
        keep = (d2 <= r2) & (ent != i)
        if not keep.any():
            continue
        ent = ent[keep]
        d2 = d2[keep]
        md = _maxdot(quat[i], quat[eps_owner[ent]], srows)
        hit = md <= cos_half
        if not hit.any():
            continue
        eh = ent[hit]
        dh = d2[hit]
        j = np.lexsort((eh, dh))[0]
        dist[k] = np.sqrt(dh[j])
        found[k] = 1
    return dist, found


def graph_edges(pos, quat, eps_pos, eps_owner, cell_start, cell_entries,
                grid_min, dims, width, radius, srows, i0, i1):
    """Undirected similarity edges (u < v) with their maxdot weights-to-be."""
    us, vs, ds = [], [], []
    r2 = radius * radius
    for i in range(i0, i1):
        ent = _stencil_entries(pos[i], cell_start, cell_entries, grid_min, dims, width)
        if ent.size == 0:
            continue
        dx = eps_pos[ent, 0] - pos[i, 0]
        dy = eps_pos[ent, 1] - pos[i, 1]
        dz = eps_pos[ent, 2] - pos[i, 2]
        d2 = (dx * dx + dy * dy) + dz * dz
        own = eps_owner[ent]
        keep = (d2 <= r2) & (own > i)
        if not keep.any():
            continue
        uniq = np.unique(own[keep])
        md = _maxdot(quat[i], quat[uniq], srows)
        us.append(np.full(uniq.size, i, np.int64))
        vs.append(uniq.astype(np.int64))
        ds.append(md)
    if not us:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64))
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ds)


def louvain_level(indptr, indices, weights, k, order, labels, m2):
    """One local-move phase of Louvain; mutates ``labels``, returns #moves.

    Nodes are visited in ``order``; candidate communities are scanned in
    first-appearance order along each node's adjacency list; strict gain
    improvement is required to move, so ties keep the current community.
    """
    n = labels.shape[0]
    sigma = np.zeros(n, np.float64)
    for i in range(n):
        sigma[labels[i]] += k[i]
    moves = 0
    while True:
        sweep_moves = 0
        for oi in range(n):
            i = int(order[oi])
            c_old = int(labels[i])
            acc = {}
            for e in range(indptr[i], indptr[i + 1]):
                j = int(indices[e])
                if j == i:
                    continue
                c = int(labels[j])
                acc[c] = acc.get(c, 0.0) + weights[e]
            sigma[c_old] -= k[i]
            best_c = c_old
            best_gain = acc.get(c_old, 0.0) - (sigma[c_old] * k[i]) / m2
            for c, w in acc.items():
                if c == c_old:
                    continue
                g = w - (sigma[c] * k[i]) / m2
                if g > best_gain:
                    best_gain = g
                    best_c = c
            sigma[best_c] += k[i]
            labels[i] = best_c
            if best_c != c_old:
                sweep_moves += 1
        moves += sweep_moves
        if sweep_moves == 0:
            break
    return moves


def fixed_radius_components(pos, cell_start, cell_entries, grid_min, dims,
                            width, radius2):
    """Connected components of the <=sqrt(radius2) proximity graph.

    Returned ids only identify the partition; callers densify them by first
    appearance, which is what makes the two backends agree exactly.
    """
    m = pos.shape[0]
    rows, cols = [], []
    for i in range(m):
        ent = _stencil_entries(pos[i], cell_start, cell_entries, grid_min, dims, width)
        if ent.size == 0:
            continue
        dx = pos[ent, 0] - pos[i, 0]
        dy = pos[ent, 1] - pos[i, 1]
        dz = pos[ent, 2] - pos[i, 2]
        d2 = (dx * dx + dy * dy) + dz * dz
        keep = (d2 <= radius2) & (ent > i)
        if keep.any():
            jj = ent[keep]
            rows.append(np.full(jj.size, i, np.int64))
            cols.append(jj.astype(np.int64))
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = np.empty(0, np.int64)
        c = np.empty(0, np.int64)
    g = coo_matrix((np.ones(r.size, np.int8), (r, c)), shape=(m, m))
    _, lab = connected_components(g, directed=False)
    return lab.astype(np.int64)


def voxel_nearest(cand, origin, dcell, dims, r_search):
    """Nearest-candidate index per voxel by splatting candidates.

    Voxel centers sit at origin + (i + 0.5) * dcell.  Candidates are visited
    in array order and win on strictly smaller squared distance, so the
    lowest candidate index takes any tie.  Voxels no candidate reaches keep
    -1; callers resolve those separately.
    """
    nx, ny, nz = int(dims[0]), int(dims[1]), int(dims[2])
    best = np.full(nx * ny * nz, -1, np.int64)
    bd2 = np.full(nx * ny * nz, np.inf, np.float64)
    best3 = best.reshape(nx, ny, nz)
    bd23 = bd2.reshape(nx, ny, nz)
    for c in range(cand.shape[0]):
        x, y, z = cand[c, 0], cand[c, 1], cand[c, 2]
        il = max(int(math.ceil((x - r_search - origin[0]) / dcell - 0.5)), 0)
        ih = min(int(math.floor((x + r_search - origin[0]) / dcell - 0.5)), nx - 1)
        jl = max(int(math.ceil((y - r_search - origin[1]) / dcell - 0.5)), 0)
        jh = min(int(math.floor((y + r_search - origin[1]) / dcell - 0.5)), ny - 1)
        kl = max(int(math.ceil((z - r_search - origin[2]) / dcell - 0.5)), 0)
        kh = min(int(math.floor((z + r_search - origin[2]) / dcell - 0.5)), nz - 1)
        if il > ih or jl > jh or kl > kh:
            continue
        ddx = origin[0] + (np.arange(il, ih + 1) + 0.5) * dcell - x
        ddy = origin[1] + (np.arange(jl, jh + 1) + 0.5) * dcell - y
        ddz = origin[2] + (np.arange(kl, kh + 1) + 0.5) * dcell - z
        d2 = ((ddx * ddx)[:, None, None] + (ddy * ddy)[None, :, None]) \
            + (ddz * ddz)[None, None, :]
        sub_b = bd23[il:ih + 1, jl:jh + 1, kl:kh + 1]
        sub_i = best3[il:ih + 1, jl:jh + 1, kl:kh + 1]
        w = d2 < sub_b
        sub_b[w] = d2[w]
        sub_i[w] = c
    return best


def _wavefront_planes(n1, n2, n3):
    """Index arrays of the i+j+k = const anti-diagonal planes (1-based).

    Within one sweep direction each voxel's minus neighbours live on the
    previous plane and its plus neighbours on the next one, so updating a
    whole plane at once reproduces the lexicographic Gauss-Seidel ordering
    exactly.
    """
    planes = []
    for level in range(3, n1 + n2 + n3 + 1):
        iis, jjs = [], []
        ilo = max(1, level - n2 - n3)
        ihi = min(n1, level - 2)
        for i in range(ilo, ihi + 1):
            jlo = max(1, level - i - n3)
            jhi = min(n2, level - i - 1)
            if jhi < jlo:
                continue
            j = np.arange(jlo, jhi + 1)
            iis.append(np.full(j.size, i, np.intp))
            jjs.append(j)
        if not iis:
            continue
        ii = np.concatenate(iis)
        jj = np.concatenate(jjs)
        kk = level - ii - jj
        planes.append((ii, jj, kk))
    return planes


def _sweep_once(view, planes, h):
    md = 0.0
    for ii, jj, kk in planes:
        am = np.abs(view[ii - 1, jj, kk])
        ap = np.abs(view[ii + 1, jj, kk])
        ax = np.minimum(am, ap)
        am = np.abs(view[ii, jj - 1, kk])
        ap = np.abs(view[ii, jj + 1, kk])
        ay = np.minimum(am, ap)
        am = np.abs(view[ii, jj, kk - 1])
        ap = np.abs(view[ii, jj, kk + 1])
        az = np.minimum(am, ap)
        t1 = np.minimum(ax, ay)
        t2 = np.maximum(ax, ay)
        a = np.minimum(t1, az)
        b = np.minimum(t2, np.maximum(t1, az))
        c = np.maximum(t2, az)
        u = a + h
        m1 = u > b
        if m1.any():
            arg = 2.0 * h * h - (a - b) * (a - b)
            u2 = 0.5 * ((a + b) + np.sqrt(np.maximum(arg, 0.0)))
            u = np.where(m1, u2, u)
        m2 = u > c
        if m2.any():
            s = (a + b) + c
            arg = s * s - 3.0 * (((a * a + b * b) + c * c) - h * h)
            u3 = (s + np.sqrt(np.maximum(arg, 0.0))) / 3.0
            u = np.where(m2, u3, u)
        cur = view[ii, jj, kk]
        mag = np.abs(cur)
        upd = u < mag
        if upd.any():
            diff = (mag - u)[upd].max()
            if diff > md:
                md = diff
            view[ii, jj, kk] = np.where(upd, np.where(cur < 0, -u, u), cur)
    return md


def eikonal_sweep(phi, h, tol, max_rounds):
    """Fast sweeping on a signed field padded with one +inf border layer.

    Eight Gauss-Seidel sweep directions per round, Godunov upwind update,
    magnitudes only ever decrease and signs never change.  Returns the number
    of rounds run; convergence is max |update| < tol over a full round.
    """
    n1 = phi.shape[0] - 2
    n2 = phi.shape[1] - 2
    n3 = phi.shape[2] - 2
    planes = _wavefront_planes(n1, n2, n3)
    rounds = 0
    with np.errstate(invalid="ignore"):
        for _ in range(max_rounds):
            md = 0.0
            for sx in (1, -1):
                for sy in (1, -1):
                    for sz in (1, -1):
                        view = phi[::sx, ::sy, ::sz]
                        d = _sweep_once(view, planes, h)
                        if d > md:
                            md = d
            rounds += 1
            if md < tol:
                break
    return rounds


def _cut_cell(verts, faces, nx, ny, nz, off):
    """Clip a convex polyhedron by the half-space n.x <= off.

    ``verts`` is a growing list of [x, y, z]; ``faces`` a list of
    (generator, [vertex ids]).  Returns (faces, changed, failed): ``failed``
    covers the empty cell and non-simple intersections, both of which only
    arise from degenerate input.
    """
    sv = [((nx * v[0] + ny * v[1]) + nz * v[2]) - off for v in verts]
    live = set()
    for _, loop in faces:
        live.update(loop)
    n_out = sum(1 for v in live if sv[v] > 0.0)
    if n_out == 0:
        return faces, False, False
    if n_out == len(live):
        return faces, True, True
    crossmap = {}

    def crossing(a, b):
        key = (a, b) if a < b else (b, a)
        vid = crossmap.get(key)
        if vid is None:
            lo, hi = key
            t = sv[lo] / (sv[lo] - sv[hi])
            x = verts[lo][0] + t * (verts[hi][0] - verts[lo][0])
            y = verts[lo][1] + t * (verts[hi][1] - verts[lo][1])
            z = verts[lo][2] + t * (verts[hi][2] - verts[lo][2])
            verts.append([x, y, z])
            vid = len(verts) - 1
            crossmap[key] = vid
        return vid

    new_faces = []
    chords = []
    for gen, loop in faces:
        nl = []
        cross_pts = []
        m = len(loop)
        for e in range(m):
            va = loop[e]
            vb = loop[(e + 1) % m]
            ina = sv[va] <= 0.0
            inb = sv[vb] <= 0.0
            if ina:
                nl.append(va)
            if ina != inb:
                x = crossing(va, vb)
                nl.append(x)
                cross_pts.append(x)
        if len(nl) >= 3:
            new_faces.append((gen, nl))
        uniq = []
        for p in cross_pts:
            if p not in uniq:
                uniq.append(p)
        if len(uniq) == 2:
            chords.append((uniq[0], uniq[1]))
        elif len(uniq) > 2:
            return faces, True, True
    if len(chords) >= 3:
        adj = {}
        for a, b in chords:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        for v, nb in adj.items():
            if len(nb) != 2:
                return faces, True, True
        start = chords[0][0]
        loop = [start]
        prev = -1
        cur = start
        while True:
            nb = adj[cur]
            nxt = nb[0] if nb[0] != prev else nb[1]
            if nxt == start:
                break
            loop.append(nxt)
            prev, cur = cur, nxt
            if len(loop) > len(chords):
                return faces, True, True
        if len(loop) != len(chords):
            return faces, True, True
        new_faces.append((None, loop))
    return new_faces, True, False


_BOX_FACES = (
    (-1, (0, 1, 3, 2)),
    (-2, (4, 5, 7, 6)),
    (-3, (0, 1, 5, 4)),
    (-4, (2, 3, 7, 6)),
    (-5, (0, 2, 6, 4)),
    (-6, (1, 3, 7, 5)),
)


def voronoi_cells(cand, gen_idx, member_mask, cell_start, cell_entries,
                  grid_min, dims, width, box_lo, box_hi, delta, r0, guard):
    """Clip the Voronoi cells of the member candidates inside a guard box.

    Candidates are applied in (d^2, index) order; each bisector is pulled
    toward the generator by ``delta`` to break cospherical ties; cutting
    stops once the next candidate is farther than twice the current farthest
    cell vertex.  A cell is complete only if that security radius also fits
    inside ``guard``, the radius to which the candidate cloud is known to be
    complete.  Status per cell: 0 ok, 1 incomplete (caller grows the box),
    2 degenerate.  Emitted facets are the member|non-member walls, in cell
    then cut order, with their cell index and neighbouring candidate index.
    """
    k = gen_idx.shape[0]
    status = np.zeros(k, np.int64)
    fc_cell, fc_nbr, fc_loops = [], [], []
    g2 = guard * guard
    for gi in range(k):
        g = int(gen_idx[gi])
        gx, gy, gz = cand[g, 0], cand[g, 1], cand[g, 2]
        dx = cand[:, 0] - gx
        dy = cand[:, 1] - gy
        dz = cand[:, 2] - gz
        d2_all = (dx * dx + dy * dy) + dz * dz
        order = np.lexsort((np.arange(cand.shape[0]), d2_all))
        verts = [
            [box_lo[0], box_lo[1], box_lo[2]],
            [box_lo[0], box_lo[1], box_hi[2]],
            [box_lo[0], box_hi[1], box_lo[2]],
            [box_lo[0], box_hi[1], box_hi[2]],
            [box_hi[0], box_lo[1], box_lo[2]],
            [box_hi[0], box_lo[1], box_hi[2]],
            [box_hi[0], box_hi[1], box_lo[2]],
            [box_hi[0], box_hi[1], box_hi[2]],
        ]
        faces = [(gen, list(loop)) for gen, loop in _BOX_FACES]
        r2far = 0.0
        for v in verts:
            ddx = v[0] - gx
            ddy = v[1] - gy
            ddz = v[2] - gz
            q = (ddx * ddx + ddy * ddy) + ddz * ddz
            if q > r2far:
                r2far = q
        failed = False
        for t in order:
            t = int(t)
            if t == g:
                continue
            d2 = d2_all[t]
            if d2 <= 0.0:
                continue
            if d2 > 4.0 * r2far:
                break
            if d2 > g2:
                break
            d = math.sqrt(d2)
            nx = (cand[t, 0] - gx) / d
            ny = (cand[t, 1] - gy) / d
            nz = (cand[t, 2] - gz) / d
            mx = 0.5 * (gx + cand[t, 0])
            my = 0.5 * (gy + cand[t, 1])
            mz = 0.5 * (gz + cand[t, 2])
            off = ((nx * mx + ny * my) + nz * mz) - delta
            new_faces, changed, bad = _cut_cell(verts, faces, nx, ny, nz, off)
            if bad:
                failed = True
                break
            if changed:
                faces = [(t if gen is None else gen, loop) for gen, loop in new_faces]
                r2far = 0.0
                live = set()
                for _, loop in faces:
                    live.update(loop)
                for vid in live:
                    v = verts[vid]
                    ddx = v[0] - gx
                    ddy = v[1] - gy
                    ddz = v[2] - gz
                    q = (ddx * ddx + ddy * ddy) + ddz * ddz
                    if q > r2far:
                        r2far = q
        if failed:
            status[gi] = 2
            continue
        if 4.0 * r2far > g2 or any(gen < 0 for gen, _ in faces):
            status[gi] = 1
            continue
        for gen, loop in faces:
            if member_mask[gen]:
                continue
            fc_cell.append(gi)
            fc_nbr.append(gen)
            fc_loops.append(np.array([verts[v] for v in loop], np.float64))
    nf = len(fc_cell)
    fv_off = np.zeros(nf + 1, np.int64)
    for i, lp in enumerate(fc_loops):
        fv_off[i + 1] = fv_off[i] + lp.shape[0]
    if nf:
        fverts = np.concatenate(fc_loops, axis=0)
    else:
        fverts = np.empty((0, 3), np.float64)
    return (status, np.array(fc_cell, np.int64), np.array(fc_nbr, np.int64),
            fv_off, fverts)


def _facet_pack_pad(fv_off, fverts, v2d):
    """Padded per-facet edge/vertex arrays for the vectorised distance."""
    nf = fv_off.shape[0] - 1
    counts = np.diff(fv_off)
    emax = int(counts.max()) if nf else 1
    ea3 = np.zeros((nf, emax, 3))
    eb3 = np.zeros((nf, emax, 3))
    ea2 = np.zeros((nf, emax, 2))
    eb2 = np.zeros((nf, emax, 2))
    vp3 = np.zeros((nf, emax, 3))
    for f in range(nf):
        s, e = fv_off[f], fv_off[f + 1]
        c = e - s
        v3 = fverts[s:e]
        v2 = v2d[s:e]
        idx = np.arange(emax)
        src = np.minimum(idx, c - 1)
        vp3[f] = v3[src]
        asrc = np.where(idx < c, idx, 0)
        bsrc = np.where(idx < c, (idx + 1) % c, 0)
        ea3[f] = v3[asrc]
        eb3[f] = v3[bsrc]
        ea2[f] = v2[asrc]
        eb2[f] = v2[bsrc]
        if c < emax:
            ea3[f, c:] = v3[0]
            eb3[f, c:] = v3[0]
            ea2[f, c:] = v2[0]
            eb2[f, c:] = v2[0]
    return ea3, eb3, ea2, eb2, vp3


def vor_distances(pts, fv_off, fverts, v2d, v0, nrm, e1, e2, btol, flo, fhi,
                  node_lo, node_hi, node_left, node_right, node_start,
                  node_count, perm, use_bvh, i0, i1):
    """Distance from each point to the nearest hull facet.

    The pure backend ignores ``use_bvh`` and scans every facet; because the
    tree traversal only ever skips facets that cannot beat the running
    minimum, both routes return bit-identical values.
    """
    nf = fv_off.shape[0] - 1
    n = i1 - i0
    out = np.empty(n, np.float64)
    if nf == 0:
        out.fill(np.inf)
        return out
    ea3, eb3, ea2, eb2, vp3 = _facet_pack_pad(fv_off, fverts, v2d)
    d3 = eb3 - ea3
    l2 = (d3[..., 0] * d3[..., 0] + d3[..., 1] * d3[..., 1]) + d3[..., 2] * d3[..., 2]
    real = l2 > 0.0
    cru1 = eb2[..., 0] - ea2[..., 0]
    crv1 = eb2[..., 1] - ea2[..., 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        for kk in range(n):
            p = pts[i0 + kk]
            px, py, pz = p[0], p[1], p[2]
            dn = ((px - v0[:, 0]) * nrm[:, 0] + (py - v0[:, 1]) * nrm[:, 1]) \
                + (pz - v0[:, 2]) * nrm[:, 2]
            fu = ((px - v0[:, 0]) * e1[:, 0] + (py - v0[:, 1]) * e1[:, 1]) \
                + (pz - v0[:, 2]) * e1[:, 2]
            fv = ((px - v0[:, 0]) * e2[:, 0] + (py - v0[:, 1]) * e2[:, 1]) \
                + (pz - v0[:, 2]) * e2[:, 2]
            cr = cru1 * (fv[:, None] - ea2[..., 1]) - crv1 * (fu[:, None] - ea2[..., 0])
            inside = (cr >= -btol[:, None]).all(axis=1)
            tnum = ((px - ea3[..., 0]) * d3[..., 0] + (py - ea3[..., 1]) * d3[..., 1]) \
                + (pz - ea3[..., 2]) * d3[..., 2]
            t = np.where(real, tnum / np.where(real, l2, 1.0), -1.0)
            ok = real & (t >= 0.0) & (t <= 1.0)
            cx = ea3[..., 0] + t * d3[..., 0]
            cy = ea3[..., 1] + t * d3[..., 1]
            cz = ea3[..., 2] + t * d3[..., 2]
            ed2 = ((px - cx) * (px - cx) + (py - cy) * (py - cy)) + (pz - cz) * (pz - cz)
            ed2 = np.where(ok, ed2, np.inf)
            vd2 = ((px - vp3[..., 0]) * (px - vp3[..., 0])
                   + (py - vp3[..., 1]) * (py - vp3[..., 1])) \
                + (pz - vp3[..., 2]) * (pz - vp3[..., 2])
            best_out = np.minimum(ed2.min(axis=1), vd2.min(axis=1))
            df = np.where(inside, np.abs(dn), np.sqrt(best_out))
            out[kk] = df.min()
    return out
