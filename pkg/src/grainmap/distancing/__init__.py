"""Boundary-distance engines: DIS, SDF, and VOR."""

from .dis import distance_dis
from .records import SCALAR_NAMES, SIGMA_COMPONENTS, DistanceRecords, attach_state
from .sdf import SdfReport, distance_sdf, residual_stats
from .voronoi import (
    ContourHull,
    build_contour_hull,
    distance_voronoi,
    export_hulls_obj,
    hull_distances,
)

__all__ = [
    "distance_dis",
    "distance_sdf",
    "distance_voronoi",
    "attach_state",
    "DistanceRecords",
    "SdfReport",
    "ContourHull",
    "build_contour_hull",
    "hull_distances",
    "export_hulls_obj",
    "residual_stats",
    "SCALAR_NAMES",
    "SIGMA_COMPONENTS",
]
