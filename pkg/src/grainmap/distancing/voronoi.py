"""Contour-hull distancing through periodic Voronoi tessellation.

Per grain, the Voronoi cells of its representative member points are clipped
inside the grain AABB fattened by a guard zone; facets between a member cell
and a non-member cell form the closed contour hull.  Cells that still touch
the clip box (status 1) trigger guard doubling and a re-tessellation, at
most three times.  Cells the compiled backend reports degenerate (its fixed
polytope capacities) are retried with the pure backend, which has none.

Facets are canonicalized once (outward normal, counterclockwise 2D loop,
inclusive-boundary tolerance) and queried either exhaustively or through an
AABB tree; both query routes return bit-identical distances.  Hulls whose
edges are not all shared pairwise (diagonal member cells touching along a
lattice edge) stay usable but carry watertight=False.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import _kernels as kernels
from .._kernels import pure as _pure
from ..errors import GuardExhausted, SpecViolation
from ..grain_reconstruct import GrainGeometry
from ..parallel import map_ordered
from ..point_clouds import PeriodicPointCloud, SpatialBinIndex, box_query
from .records import DistanceRecords

log = logging.getLogger(__name__)

_BVH_LEAF = 4


@dataclass
class BvhArrays:
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    perm: np.ndarray


@dataclass
class ContourHull:
    grain: int
    frame_center: np.ndarray   # (3,) hull vertices are relative to this
    fc_entry: np.ndarray       # (F,) int64 generating member P1 entry
    fn_entry: np.ndarray       # (F,) int64 neighboring P1 entry
    fv_off: np.ndarray         # (F+1,) int64
    fverts: np.ndarray         # (V, 3) loop vertices, local frame
    v2d: np.ndarray            # (V, 2) in-plane coordinates
    v0: np.ndarray             # (F, 3) loop base vertex
    nrm: np.ndarray            # (F, 3) outward unit normal
    e1: np.ndarray             # (F, 3)
    e2: np.ndarray             # (F, 3)
    btol: np.ndarray           # (F,) inclusive boundary tolerance
    flo: np.ndarray            # (F, 3) facet AABB
    fhi: np.ndarray
    bvh: BvhArrays
    guard_used: float = 0.0
    watertight: bool = True

    @property
    def n_facets(self) -> int:
        return self.fc_entry.shape[0]


def _build_bvh(flo: np.ndarray, fhi: np.ndarray) -> BvhArrays:
    nf = flo.shape[0]
    cent = 0.5 * (flo + fhi)
    perm = np.arange(nf, dtype=np.int64)
    lo_l, hi_l, left_l, right_l, start_l, count_l = [], [], [], [], [], []

    def rec(s: int, c: int) -> int:
        me = len(lo_l)
        sl = perm[s:s + c]
        lo_l.append(flo[sl].min(axis=0))
        hi_l.append(fhi[sl].max(axis=0))
        left_l.append(-1)
        right_l.append(-1)
        start_l.append(s)
        count_l.append(c)
        if c > _BVH_LEAF:
            ext = cent[sl].max(axis=0) - cent[sl].min(axis=0)
            axis = int(np.argmax(ext))
            order = np.argsort(cent[sl, axis], kind="stable")
            perm[s:s + c] = sl[order]
            mid = c // 2
            left_l[me] = rec(s, mid)
            right_l[me] = rec(s + mid, c - mid)
        return me

    if nf:
        rec(0, nf)
    else:
        lo_l.append(np.zeros(3))
        hi_l.append(np.zeros(3))
        left_l.append(-1)
        right_l.append(-1)
        start_l.append(0)
        count_l.append(0)
    return BvhArrays(
        np.ascontiguousarray(lo_l, np.float64),
        np.ascontiguousarray(hi_l, np.float64),
        np.array(left_l, np.int64), np.array(right_l, np.int64),
        np.array(start_l, np.int64), np.array(count_l, np.int64), perm,
    )


def _canonicalize(gen_pos: np.ndarray, nbr_pos: np.ndarray, fv_off: np.ndarray,
                  fverts: np.ndarray):
    """Outward normals, counterclockwise loops, in-plane frames per facet."""
    nf = fv_off.shape[0] - 1
    nrm = nbr_pos - gen_pos
    nrm /= np.sqrt(np.einsum("ij,ij->i", nrm, nrm))[:, None]
    e1 = np.zeros((nf, 3))
    e2 = np.zeros((nf, 3))
    v0 = np.zeros((nf, 3))
    btol = np.zeros(nf)
    flo = np.zeros((nf, 3))
    fhi = np.zeros((nf, 3))
    v2d = np.zeros((fverts.shape[0], 2))
    for f in range(nf):
        a, b = int(fv_off[f]), int(fv_off[f + 1])
        loop = fverts[a:b]
        lo = loop.min(axis=0)
        hi = loop.max(axis=0)
        diam = float(np.sqrt(((hi - lo) ** 2).sum()))
        tiny = max(1e-12 * diam, 1e-300)
        base = loop[0]
        d = None
        for j in range(1, loop.shape[0]):
            cand = loop[j] - base
            if float((cand * cand).sum()) > tiny * tiny:
                d = cand
                break
        if d is None:
            d = loop[1] - base
        u1 = d / max(float(np.sqrt((d * d).sum())), 1e-300)
        u2 = np.cross(nrm[f], u1)
        uu = (loop - base) @ u1
        ww = (loop - base) @ u2
        area2 = float((uu * np.roll(ww, -1) - np.roll(uu, -1) * ww).sum())
        if area2 < 0.0:
            loop = loop[::-1].copy()
            fverts[a:b] = loop
            base = loop[0]
            uu = (loop - base) @ u1
            ww = (loop - base) @ u2
        v0[f] = base
        e1[f] = u1
        e2[f] = u2
        v2d[a:b, 0] = uu
        v2d[a:b, 1] = ww
        btol[f] = 1e-9 * diam
        flo[f] = lo
        fhi[f] = hi
    return v2d, v0, nrm, e1, e2, btol, flo, fhi


def _edges_paired(fv_off: np.ndarray, fverts: np.ndarray,
                  spacing: float) -> bool:
    """True when every facet-loop edge is shared by exactly two facets.

    Vertices are snapped to a 1e-6*spacing lattice so coincident vertices
    computed in different cells compare equal; edges four facets share
    (diagonal member cells meeting along a lattice edge) return False.
    """
    nv = fverts.shape[0]
    if nv == 0:
        return True
    q = 1e-6 * spacing
    keys = np.round(fverts / q).astype(np.int64)
    nxt = np.arange(1, nv + 1, dtype=np.int64)
    nxt[fv_off[1:] - 1] = fv_off[:-1]
    ka = keys
    kb = keys[nxt]
    swap = ((ka[:, 0] > kb[:, 0])
            | ((ka[:, 0] == kb[:, 0]) & (ka[:, 1] > kb[:, 1]))
            | ((ka[:, 0] == kb[:, 0]) & (ka[:, 1] == kb[:, 1])
               & (ka[:, 2] > kb[:, 2])))
    rows = np.where(swap[:, None], np.hstack([kb, ka]), np.hstack([ka, kb]))
    _, counts = np.unique(rows, axis=0, return_counts=True)
    return bool((counts == 2).all())


def build_contour_hull(grain: int, members: np.ndarray, p1: PeriodicPointCloud,
                       spacing: float, guard: float | None = None,
                       p1_index: SpatialBinIndex | None = None) -> ContourHull:
    if guard is None:
        guard = 3.0 * spacing
    if guard < 3.0 * spacing:
        raise SpecViolation(f"guard {guard} below 3*spacing ({3.0 * spacing})")
    if p1_index is None:
        p1_index = SpatialBinIndex.build(p1.positions, 2.0 * spacing)
    mpos = p1.positions[members]
    tlo = mpos.min(axis=0)
    thi = mpos.max(axis=0)
    center = 0.5 * (tlo + thi)
    delta = 1e-12 * spacing
    r0 = 2.2 * spacing
    for attempt in range(4):
        guard_a = guard * (2.0 ** attempt)
        lo = tlo - guard_a
        hi = thi + guard_a
        cand_ids = box_query(p1_index, p1.positions, lo, hi)
        mask = np.isin(cand_ids, members)
        if int(mask.sum()) != members.shape[0]:
            raise SpecViolation(f"grain {grain}: members not all inside clip box")
        cpos = np.ascontiguousarray(p1.positions[cand_ids] - center)
        idx = SpatialBinIndex.build(cpos, r0)
        gen_idx = np.nonzero(mask)[0].astype(np.int64)
        args = (cpos, gen_idx, mask.astype(np.uint8), idx.cell_start,
                idx.cell_entries, idx.box_min, idx.dims, idx.bucket_width,
                lo - center, hi - center, delta, r0, guard_a)
        status, fc_cell, fc_nbr, fv_off, fverts = kernels.voronoi_cells(*args)
        if (status == 2).any() and kernels.BACKEND != "pure":
            # capacity overflow in the fixed-size native polytope buffers
            log.info("grain %d: retessellating with the pure backend", grain)
            status, fc_cell, fc_nbr, fv_off, fverts = _pure.voronoi_cells(*args)
        if (status == 2).any():
            raise RuntimeError(
                f"grain {grain}: degenerate Voronoi cell at guard {guard_a}"
            )
        if (status == 1).any():
            continue
        gen_entries = cand_ids[gen_idx[fc_cell]]
        nbr_entries = cand_ids[fc_nbr]
        gen_pos = cpos[gen_idx[fc_cell]]
        nbr_pos = cpos[fc_nbr]
        fverts = np.ascontiguousarray(fverts)
        v2d, v0, nrm, e1, e2, btol, flo, fhi = _canonicalize(
            gen_pos, nbr_pos, fv_off, fverts)
        bvh = _build_bvh(flo, fhi)
        watertight = _edges_paired(fv_off, fverts, spacing)
        if not watertight:
            log.warning("grain %d: hull closed but not edge-manifold", grain)
        return ContourHull(grain, center, gen_entries, nbr_entries, fv_off,
                           fverts, v2d, v0, nrm, e1, e2, btol, flo, fhi, bvh,
                           guard_used=guard_a, watertight=watertight)
    raise GuardExhausted(
        f"grain {grain}: cells still wall-bound after 3 guard doublings"
    )


def hull_distances(hull: ContourHull, points: np.ndarray,
                   use_bvh: bool = True) -> np.ndarray:
    """Unsigned distance from each (global-frame) point to the hull surface."""
    pts = np.ascontiguousarray(np.asarray(points, np.float64) - hull.frame_center)
    b = hull.bvh
    return kernels.vor_distances(
        pts, hull.fv_off, hull.fverts, hull.v2d, hull.v0, hull.nrm, hull.e1,
        hull.e2, hull.btol, hull.flo, hull.fhi, b.node_lo, b.node_hi,
        b.node_left, b.node_right, b.node_start, b.node_count, b.perm,
        1 if use_bvh else 0, 0, pts.shape[0],
    )


def distance_voronoi(geometry: GrainGeometry, p1: PeriodicPointCloud,
                     guard: float | None = None, use_bvh: bool = True,
                     p1_index: SpatialBinIndex | None = None, executor=None,
                     workers: int = 1, dynamic: bool = False,
                     keep_hulls: bool = False):
    """Hull distances for every member point of every non-wrapped grain.

    Returns (records, hulls); hulls is None unless ``keep_hulls``.
    """
    spacing = geometry.spacing
    if p1_index is None:
        p1_index = SpatialBinIndex.build(p1.positions, 2.0 * spacing)

    def run(g: int):
        members = geometry.members[g]
        if members is None:
            return None
        hull = build_contour_hull(g, members, p1, spacing, guard, p1_index)
        if hull.n_facets == 0:
            log.warning("grain %d: empty hull, no distances", g)
        dist = hull_distances(hull, p1.positions[members], use_bvh)
        owners = p1.owner[members]
        return dist / spacing, owners.astype(np.int64), hull

    parts = map_ordered(run, list(range(geometry.n_grains)), executor,
                        workers, dynamic)
    parts = [p for p in parts if p is not None]
    dist = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    owner = (np.concatenate([p[1] for p in parts]) if parts
             else np.empty(0, np.int64))
    hulls = [p[2] for p in parts] if keep_hulls else None
    return DistanceRecords("VOR", dist, owner), hulls


def export_hulls_obj(hulls, path) -> None:
    """OBJ text: one object per grain, vertices back in the global frame."""
    lines = []
    base = 1
    for hull in hulls:
        if hull is None:
            continue
        lines.append(f"o grain_{hull.grain}")
        verts = hull.fverts + hull.frame_center
        for v in verts:
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for f in range(hull.n_facets):
            a, b = int(hull.fv_off[f]), int(hull.fv_off[f + 1])
            lines.append("f " + " ".join(str(base + j) for j in range(a, b)))
        base += verts.shape[0]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
