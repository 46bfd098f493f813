"""Grain reconstruction and periodic-fragment geometry.

Two reconstructions produce a point partition: TEX densifies the stored
texture ids by first appearance; LOU runs weighted Louvain on the
low-disorientation neighborhood graph (edge weight exp(K_L*(maxdot - 1)),
where maxdot is the largest symmetry-equivalent |q_0| of the relative
rotation, so identical orientations get weight 1).

Fragment merging runs fixed-radius clustering (radius^2 = 3*spacing^2) over
each grain's 27-image point set, keeps the cluster whose centroid is nearest
the deformed-domain center, and flags grains that wrap the domain.  The
voxelization maps grain-window voxels to the nearest P1 entry on a global
lattice so windows of different grains agree voxel-for-voxel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .errors import EmptyInput, GrainWrapsDomain, SpecViolation
from .parallel import chunk_ranges, map_ordered
from .point_clouds import PeriodicPointCloud, SpatialBinIndex, box_query
from .rve_io import StrainStepDataset
from .tensor_kernels import SYM_SCALAR_ROWS, mean_orientation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrainPartition:
    labels: np.ndarray  # (N,) int64, dense 0..n_grains-1, first-appearance order
    method: str         # "TEX" | "LOU"
    n_grains: int


def densify_first_appearance(labels: np.ndarray) -> np.ndarray:
    """Relabel to 0..K-1 in order of first appearance ({5,9,5} -> {0,1,0})."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.astype(np.int64)
    vals, first = np.unique(labels, return_index=True)
    rank = np.empty(vals.size, np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(vals.size)
    lut = np.zeros(int(vals.max()) + 1, np.int64)
    lut[vals] = rank
    return lut[labels]


def reconstruct_tex(dataset: StrainStepDataset) -> GrainPartition:
    labels = densify_first_appearance(dataset.texture_id.astype(np.int64))
    return GrainPartition(labels, "TEX", int(labels.max()) + 1)


@dataclass
class DisorientationGraph:
    n_nodes: int
    u: np.ndarray        # (E,) int64, u < v, unique undirected edges
    v: np.ndarray
    w: np.ndarray        # (E,) float64 weights in (0, 1]
    k_l: float


def build_disorientation_graph(dataset: StrainStepDataset,
                               eps_cloud: PeriodicPointCloud,
                               index: SpatialBinIndex,
                               k_l: float,
                               radius: float,
                               executor=None, workers: int = 1,
                               dynamic: bool = False) -> DisorientationGraph:
    """Edges between points with any periodic image within ``radius``.

    The neighborhood index must be built over ``eps_cloud`` with bucket
    width equal to ``radius``.
    """
    if radius > index.bucket_width:
        raise SpecViolation(
            f"graph radius {radius} exceeds index bucket {index.bucket_width}"
        )
    n = dataset.n_points
    pos = dataset.positions
    quat = dataset.orientation
    epos = eps_cloud.positions
    eown = eps_cloud.owner

    def run(rng_pair):
        i0, i1 = rng_pair
        return kernels.graph_edges(
            pos, quat, epos, eown, index.cell_start, index.cell_entries,
            index.box_min, index.dims, index.bucket_width, radius,
            SYM_SCALAR_ROWS, i0, i1,
        )

    parts = map_ordered(run, chunk_ranges(n, 1 << 14), executor, workers, dynamic)
    u = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, np.int64)
    v = np.concatenate([p[1] for p in parts]) if parts else np.empty(0, np.int64)
    md = np.concatenate([p[2] for p in parts]) if parts else np.empty(0)
    # kernel dot products may exceed 1 by float noise; weights stay in (0, 1]
    w = np.exp(k_l * (np.minimum(md, 1.0) - 1.0))
    return DisorientationGraph(n, u, v, w, k_l)


def _modularity(labels: np.ndarray, u: np.ndarray, v: np.ndarray, w: np.ndarray,
                self_w: np.ndarray, k: np.ndarray, m2: float) -> float:
    nc = int(labels.max()) + 1
    sig_in = np.bincount(labels, weights=2.0 * self_w, minlength=nc)
    if u.size:
        same = labels[u] == labels[v]
        if same.any():
            sig_in += np.bincount(labels[u[same]], weights=2.0 * w[same],
                                  minlength=nc)
    sig_tot = np.bincount(labels, weights=k, minlength=nc)
    return float((sig_in / m2 - (sig_tot / m2) ** 2).sum())


def reconstruct_louvain(graph: DisorientationGraph, q_c: float = 0.01,
                        seed: int = 0) -> GrainPartition:
    """Multi-level Louvain; a pass keeps running while it still moves nodes,
    levels keep running while a pass moved >= 1 node and gained > q_c."""
    n = graph.n_nodes
    if n == 0:
        raise EmptyInput("no nodes")
    u, v, w = graph.u.copy(), graph.v.copy(), graph.w.copy()
    self_w = np.zeros(n)
    point_labels = np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    nl = n
    while True:
        k = 2.0 * self_w.copy()
        if u.size:
            k += np.bincount(u, weights=w, minlength=nl)
            k += np.bincount(v, weights=w, minlength=nl)
        m2 = float(k.sum())
        if m2 <= 0.0:
            break
        ui = np.concatenate([u, v])
        vi = np.concatenate([v, u])
        wi = np.concatenate([w, w])
        order = np.lexsort((vi, ui))
        ui, vi, wi = ui[order], vi[order], wi[order]
        indptr = np.zeros(nl + 1, np.int64)
        np.cumsum(np.bincount(ui, minlength=nl), out=indptr[1:])
        node_order = rng.permutation(nl).astype(np.int64)
        labels = np.arange(nl, dtype=np.int64)
        q0 = _modularity(labels, u, v, w, self_w, k, m2)
        moves = kernels.louvain_level(indptr, vi, wi, k, node_order, labels, m2)
        labels = densify_first_appearance(labels)
        gain = _modularity(labels, u, v, w, self_w, k, m2) - q0
        point_labels = labels[point_labels]
        nc = int(labels.max()) + 1
        if moves == 0 or gain <= q_c or nc == nl:
            break
        cu, cv = labels[u], labels[v]
        new_self = np.bincount(labels, weights=self_w, minlength=nc)
        intra = cu == cv
        if intra.any():
            new_self += np.bincount(cu[intra], weights=w[intra], minlength=nc)
        a = np.minimum(cu[~intra], cv[~intra])
        b = np.maximum(cu[~intra], cv[~intra])
        keys, inv = np.unique(a * nc + b, return_inverse=True)
        w_new = np.zeros(keys.size)
        np.add.at(w_new, inv, w[~intra])
        u, v, w = keys // nc, keys % nc, w_new
        self_w = new_self
        nl = nc
    final = densify_first_appearance(point_labels)
    return GrainPartition(final, "LOU", int(final.max()) + 1)


@dataclass
class GrainGeometry:
    spacing: float
    n_grains: int
    members: list            # per grain: (M_k,) int64 P1 entries, or None if wrapped
    boxes: np.ndarray        # (G, 2, 3) tight member AABBs, NaN rows for wrapped
    global_box: np.ndarray   # (2, 3)
    wrapped: list = field(default_factory=list)


def _merge_one_grain(g: int, entries: np.ndarray, p1: PeriodicPointCloud,
                     spacing: float, center: np.ndarray) -> np.ndarray:
    pos = p1.positions[entries]
    radius2 = 3.0 * spacing * spacing
    width = float(np.sqrt(radius2))
    idx = SpatialBinIndex.build(pos, width)
    raw = kernels.fixed_radius_components(
        pos, idx.cell_start, idx.cell_entries, idx.box_min, idx.dims,
        idx.bucket_width, radius2,
    )
    comp = densify_first_appearance(raw)
    ncl = int(comp.max()) + 1
    owners = p1.owner[entries]
    order = np.argsort(comp, kind="stable")
    bounds = np.zeros(ncl + 1, np.int64)
    np.cumsum(np.bincount(comp, minlength=ncl), out=bounds[1:])
    rows = [order[bounds[c]:bounds[c + 1]] for c in range(ncl)]
    for c in range(ncl):
        own = owners[rows[c]]
        if np.unique(own).size != own.size:
            raise GrainWrapsDomain(
                f"grain {g}: cluster holds multiple images of one owner"
            )
    cent = np.stack([pos[r].mean(axis=0) for r in rows])
    dd = cent - center
    d2 = (dd * dd).sum(axis=1)
    min_entry = np.array([entries[r].min() for r in rows])
    rank = np.lexsort((min_entry, d2))
    n_owners = np.unique(owners).size
    covered: set = set()
    picked_rows = []
    for c in rank:
        own = owners[rows[c]]
        if covered and not covered.isdisjoint(own.tolist()):
            continue
        picked_rows.append(rows[c])
        covered.update(own.tolist())
        if len(covered) == n_owners:
            break
    if len(covered) != n_owners:
        log.warning("grain %d: representative covers %d of %d owners",
                    g, len(covered), n_owners)
    if len(picked_rows) > 1:
        log.warning("grain %d: %d disjoint pieces kept as representative",
                    g, len(picked_rows))
    return np.sort(entries[np.concatenate(picked_rows)])


def merge_periodic_fragments(partition: GrainPartition, p1: PeriodicPointCloud,
                             spacing: float, on_wrap: str = "raise",
                             executor=None, workers: int = 1,
                             dynamic: bool = False) -> GrainGeometry:
    if on_wrap not in ("raise", "skip"):
        raise SpecViolation(f"on_wrap must be raise|skip, got {on_wrap!r}")
    n = partition.labels.shape[0]
    if p1.n_entries != 27 * n:
        raise SpecViolation("P1 cloud does not match the partition")
    g_of_entry = partition.labels[p1.owner]
    order = np.argsort(g_of_entry, kind="stable")
    ng = partition.n_grains
    bounds = np.zeros(ng + 1, np.int64)
    np.cumsum(np.bincount(g_of_entry, minlength=ng), out=bounds[1:])
    center = 0.5 * (p1.base_box[0] + p1.base_box[1])
    wrapped: list[int] = []

    def run(g: int):
        entries = order[bounds[g]:bounds[g + 1]]
        try:
            return _merge_one_grain(g, entries, p1, spacing, center)
        except GrainWrapsDomain:
            if on_wrap == "raise":
                raise
            log.warning("grain %d wraps the periodic domain; excluded", g)
            return None

    members = map_ordered(run, list(range(ng)), executor, workers, dynamic)
    boxes = np.full((ng, 2, 3), np.nan)
    for g, m in enumerate(members):
        if m is None:
            wrapped.append(g)
            continue
        pm = p1.positions[m]
        boxes[g, 0] = pm.min(axis=0)
        boxes[g, 1] = pm.max(axis=0)
    ok = [g for g in range(ng) if members[g] is not None]
    if not ok:
        raise EmptyInput("all grains wrapped the domain")
    global_box = np.stack([
        np.nanmin(boxes[ok, 0], axis=0), np.nanmax(boxes[ok, 1], axis=0)
    ])
    return GrainGeometry(spacing, ng, members, boxes, global_box, wrapped)


@dataclass
class VoxelWindow:
    start: np.ndarray   # (3,) int64 offset on the global voxel lattice
    dims: np.ndarray    # (3,) int64
    owner: np.ndarray   # (prod(dims),) int64 flat C-order P1 entry ids

    @property
    def origin_index(self) -> np.ndarray:
        return self.start


@dataclass
class GlobalVoxelization:
    origin: np.ndarray  # (3,) lattice origin shared by all windows
    d_cell: float
    fatten: float
    windows: list       # per grain: VoxelWindow or None

    def window_origin(self, g: int) -> np.ndarray:
        return self.origin + self.windows[g].start * self.d_cell


def build_global_voxelization(geometry: GrainGeometry, p1: PeriodicPointCloud,
                              d_cell: float, fatten: float | None = None,
                              executor=None, workers: int = 1,
                              dynamic: bool = False, grains=None,
                              p1_index: SpatialBinIndex | None = None
                              ) -> GlobalVoxelization:
    """Per-grain voxel windows on one shared lattice, owners = nearest P1 entry.

    Nearest is by squared distance with ties going to the lowest entry id.
    The search radius covers moderate deformation; voxels the splat kernel
    misses fall back to a dense scan over the same candidate set.  With
    ``grains`` only that subset of windows is built (the lattice origin does
    not depend on the subset, so windows agree across calls); ``p1_index``
    may pass in a prebuilt bucket index with width 2*spacing.
    """
    if not d_cell > 0.0:
        raise SpecViolation(f"d_cell must be positive, got {d_cell}")
    spacing = geometry.spacing
    if fatten is None:
        fatten = 2.0 * spacing
    origin = geometry.global_box[0].copy()
    r_search = 2.0 * spacing
    if p1_index is None:
        p1_index = SpatialBinIndex.build(p1.positions, r_search)

    wanted = set(range(geometry.n_grains)) if grains is None else set(grains)

    def run(g: int):
        if g not in wanted or geometry.members[g] is None:
            return None
        blo = geometry.boxes[g, 0] - fatten
        bhi = geometry.boxes[g, 1] + fatten
        i_lo = np.floor((blo - origin) / d_cell).astype(np.int64)
        i_hi = np.ceil((bhi - origin) / d_cell).astype(np.int64) - 1
        dims = i_hi - i_lo + 1
        win_o = origin + i_lo * d_cell
        win_hi = win_o + dims * d_cell
        cand = box_query(p1_index, p1.positions, win_o - r_search,
                         win_hi + r_search)
        cpos = np.ascontiguousarray(p1.positions[cand])
        best = kernels.voxel_nearest(cpos, win_o, d_cell, dims, r_search)
        miss = np.nonzero(best < 0)[0]
        if miss.size:
            nx, ny, nz = (int(d) for d in dims)
            ii = miss // (ny * nz)
            jj = (miss // nz) % ny
            kk = miss % nz
            centers = win_o + (np.stack([ii, jj, kk], axis=1) + 0.5) * d_cell
            for row, c in zip(miss, centers):
                d = cpos - c
                best[row] = int(np.argmin((d * d).sum(axis=1)))
        return VoxelWindow(i_lo, dims, cand[best])

    windows = map_ordered(run, list(range(geometry.n_grains)), executor,
                          workers, dynamic)
    return GlobalVoxelization(origin, float(d_cell), float(fatten), windows)


def grain_mean_orientations(dataset: StrainStepDataset,
                            partition: GrainPartition) -> np.ndarray:
    means = np.empty((partition.n_grains, 4))
    for g in range(partition.n_grains):
        means[g] = mean_orientation(dataset.orientation[partition.labels == g])
    return means
