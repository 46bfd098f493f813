"""Disorientation-threshold distancing.

For each point, neighbors inside radius R are visited in ascending Euclidean
distance (ties by entry order) and the distance to the first one whose cubic
disorientation meets the threshold is recorded.  Points with no qualifying
neighbor inside R contribute no record.
"""

from __future__ import annotations

import logging

import numpy as np

from .. import _kernels as kernels
from ..errors import RadiusExceedsBucket, SpecViolation
from ..parallel import chunk_ranges, map_ordered
from ..point_clouds import PeriodicPointCloud, SpatialBinIndex
from ..tensor_kernels import SYM_SCALAR_ROWS, angle_deg_to_scalar
from .records import DistanceRecords

log = logging.getLogger(__name__)


def distance_dis(dataset, eps_cloud: PeriodicPointCloud, index: SpatialBinIndex,
                 radius: float, theta_c: float, executor=None,
                 workers: int = 1, dynamic: bool = False) -> DistanceRecords:
    if not (radius > 0.0 and theta_c > 0.0):
        raise SpecViolation(f"radius {radius} and theta_c {theta_c} must be positive")
    if radius > index.bucket_width:
        raise RadiusExceedsBucket(
            f"radius {radius} exceeds bucket width {index.bucket_width}"
        )
    cos_half = angle_deg_to_scalar(theta_c)
    pos = dataset.positions
    quat = dataset.orientation
    epos = eps_cloud.positions
    eown = eps_cloud.owner

    def run(rng_pair):
        i0, i1 = rng_pair
        return kernels.dis_scan(
            pos, quat, epos, eown, index.cell_start, index.cell_entries,
            index.box_min, index.dims, index.bucket_width, radius, cos_half,
            SYM_SCALAR_ROWS, i0, i1,
        )

    parts = map_ordered(run, chunk_ranges(dataset.n_points, 1 << 13),
                        executor, workers, dynamic)
    dist = np.concatenate([p[0] for p in parts])
    found = np.concatenate([p[1] for p in parts]).astype(bool)
    n_miss = int((~found).sum())
    if n_miss:
        log.info("%d of %d points have no disoriented neighbor within R=%g",
                 n_miss, dataset.n_points, radius)
    owner = np.nonzero(found)[0].astype(np.int64)
    return DistanceRecords("DIS", dist[found] / dataset.spacing, owner)
