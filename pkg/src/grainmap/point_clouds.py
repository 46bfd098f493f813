"""Periodic point clouds and the uniform-bucket spatial index.

Three clouds are derived from a strain step: P0 (the deformed points), P0_EPS
(P0 plus the periodic-image points that fall inside the base box fattened by
eps times its largest edge), and P1 (all 27 periodic images).  P0_EPS and P1
keep the originals first in P0 order; image entries follow grouped by image,
so a P1 entry index e maps back to owner e % N.

The bucket index is a CSR layout over a uniform grid.  Range queries require
radius <= bucket width so a single 27-cell stencil is always sufficient.
Entries within one bucket are stored in ascending point order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RadiusExceedsBucket, SpecViolation

# image offsets: row 0 is the original, rows 1..26 the lexicographic
# (di, dj, dk) without (0, 0, 0); image_id is the row index
_shifts = [(di, dj, dk)
           for di in (-1, 0, 1) for dj in (-1, 0, 1) for dk in (-1, 0, 1)]
_shifts.remove((0, 0, 0))
IMAGE_SHIFTS = np.array([(0, 0, 0)] + _shifts, np.float64)
del _shifts


@dataclass
class PeriodicPointCloud:
    kind: str                 # "P0" | "P0_EPS" | "P1"
    positions: np.ndarray     # (M, 3)
    owner: np.ndarray         # (M,) int64, index into the original points
    image_id: np.ndarray      # (M,) uint8, 0 for originals
    base_box: np.ndarray      # (2, 3) tight AABB of the originals
    epsilon: float | None = None

    @property
    def n_entries(self) -> int:
        return self.positions.shape[0]


def build_p0(positions: np.ndarray) -> PeriodicPointCloud:
    pos = np.ascontiguousarray(positions, np.float64)
    n = pos.shape[0]
    if n == 0:
        raise SpecViolation("empty point set")
    box = np.stack([pos.min(axis=0), pos.max(axis=0)])
    return PeriodicPointCloud("P0", pos, np.arange(n, dtype=np.int64),
                              np.zeros(n, np.uint8), box)


def build_p0_eps(p0: PeriodicPointCloud, periods: np.ndarray,
                 eps: float) -> PeriodicPointCloud:
    if not eps > 0.0:
        raise SpecViolation(f"eps must be positive, got {eps}")
    periods = np.asarray(periods, np.float64)
    n = p0.n_entries
    lo, hi = p0.base_box
    thick = eps * float((hi - lo).max())
    flo, fhi = lo - thick, hi + thick
    pos_parts = [p0.positions]
    own_parts = [np.arange(n, dtype=np.int64)]
    img_parts = [np.zeros(n, np.uint8)]
    for img in range(1, 27):
        shifted = p0.positions + IMAGE_SHIFTS[img] * periods
        keep = np.all((shifted >= flo) & (shifted <= fhi), axis=1)
        if not keep.any():
            continue
        pos_parts.append(shifted[keep])
        own_parts.append(np.nonzero(keep)[0].astype(np.int64))
        img_parts.append(np.full(int(keep.sum()), img, np.uint8))
    return PeriodicPointCloud(
        "P0_EPS",
        np.ascontiguousarray(np.concatenate(pos_parts)),
        np.concatenate(own_parts),
        np.concatenate(img_parts),
        p0.base_box.copy(),
        epsilon=eps,
    )


def build_p1(p0: PeriodicPointCloud, periods: np.ndarray) -> PeriodicPointCloud:
    periods = np.asarray(periods, np.float64)
    n = p0.n_entries
    pos = np.concatenate([p0.positions + IMAGE_SHIFTS[img] * periods
                          for img in range(27)])
    owner = np.tile(np.arange(n, dtype=np.int64), 27)
    image = np.repeat(np.arange(27, dtype=np.uint8), n)
    return PeriodicPointCloud("P1", np.ascontiguousarray(pos), owner, image,
                              p0.base_box.copy())


@dataclass
class SpatialBinIndex:
    bucket_width: float
    box_min: np.ndarray       # (3,)
    dims: np.ndarray          # (3,) int64
    cell_start: np.ndarray    # (ncell + 1,) int64 CSR offsets
    cell_entries: np.ndarray  # (M,) int64, ascending within each bucket

    @classmethod
    def build(cls, positions: np.ndarray, bucket_width: float) -> "SpatialBinIndex":
        if not bucket_width > 0.0:
            raise SpecViolation(f"bucket width must be positive, got {bucket_width}")
        pos = np.asarray(positions, np.float64)
        lo = pos.min(axis=0)
        span = pos.max(axis=0) - lo
        dims = np.maximum(np.floor(span / bucket_width).astype(np.int64) + 1, 1)
        c = np.floor((pos - lo) / bucket_width).astype(np.int64)
        c = np.minimum(np.maximum(c, 0), dims - 1)
        key = (c[:, 0] * dims[1] + c[:, 1]) * dims[2] + c[:, 2]
        order = np.argsort(key, kind="stable")
        ncell = int(dims[0] * dims[1] * dims[2])
        start = np.zeros(ncell + 1, np.int64)
        np.cumsum(np.bincount(key, minlength=ncell), out=start[1:])
        return cls(float(bucket_width), lo.copy(), dims, start,
                   order.astype(np.int64))

    def _gather_cells(self, cl: np.ndarray, ch: np.ndarray) -> np.ndarray:
        """Entries of all buckets in the inclusive cell-coordinate box."""
        dims = self.dims
        cl = np.maximum(cl, 0)
        ch = np.minimum(ch, dims - 1)
        if (cl > ch).any():
            return np.empty(0, np.int64)
        cx = np.arange(cl[0], ch[0] + 1)
        cy = np.arange(cl[1], ch[1] + 1)
        cz = np.arange(cl[2], ch[2] + 1)
        keys = ((cx[:, None] * dims[1] + cy[None, :])[:, :, None] * dims[2]
                + cz[None, None, :]).ravel()
        parts = [self.cell_entries[self.cell_start[k]:self.cell_start[k + 1]]
                 for k in keys]
        if not parts:
            return np.empty(0, np.int64)
        return np.concatenate(parts)


def range_query(index: SpatialBinIndex, positions: np.ndarray,
                center: np.ndarray, radius: float) -> np.ndarray:
    """Entry indices within the inclusive ball; requires radius <= bucket width."""
    if radius > index.bucket_width:
        raise RadiusExceedsBucket(
            f"radius {radius} exceeds bucket width {index.bucket_width}"
        )
    center = np.asarray(center, np.float64)
    cc = np.floor((center - index.box_min) / index.bucket_width).astype(np.int64)
    cand = index._gather_cells(cc - 1, cc + 1)
    if cand.size == 0:
        return cand
    d = positions[cand] - center
    keep = (d * d).sum(axis=1) <= radius * radius
    return cand[keep]


def box_query(index: SpatialBinIndex, positions: np.ndarray,
              lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Entry indices inside the inclusive AABB, ascending."""
    lo = np.asarray(lo, np.float64)
    hi = np.asarray(hi, np.float64)
    cl = np.floor((lo - index.box_min) / index.bucket_width).astype(np.int64)
    ch = np.floor((hi - index.box_min) / index.bucket_width).astype(np.int64)
    cand = index._gather_cells(cl, ch)
    if cand.size == 0:
        return cand
    p = positions[cand]
    keep = np.all((p >= lo) & (p <= hi), axis=1)
    return np.sort(cand[keep])
