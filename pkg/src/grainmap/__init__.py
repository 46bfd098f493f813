"""Grain reconstruction and boundary-distance statistics for periodic
crystal-plasticity point clouds.

The package reads per-point strain-step datasets (positions, deformation
gradients, first Piola-Kirchhoff stresses, orientations), reconstructs
grains either from stored texture ids or by Louvain community detection on
a disorientation-weighted neighborhood graph, merges periodic grain
fragments, measures per-point or per-voxel boundary distances with three
interchangeable methods (DIS, SDF, VOR), and bins state variables into
distance classes.

Compute-heavy kernels run on a compiled extension when available; a pure
numpy fallback with bit-identical results is selected automatically (or
forced with GRAINMAP_PURE=1).
"""

from ._kernels import BACKEND as kernel_backend
from .errors import GrainmapError
from .grain_reconstruct import (
    GrainPartition,
    build_disorientation_graph,
    build_global_voxelization,
    merge_periodic_fragments,
    reconstruct_louvain,
    reconstruct_tex,
)
from .pipeline import RunConfig, flow_curve, run_pipeline
from .point_clouds import build_p0, build_p0_eps, build_p1
from .rve_io import (
    StrainStepDataset,
    SyntheticSpec,
    generate_synthetic,
    read_strain_step,
    write_strain_step,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "kernel_backend",
    "GrainmapError",
    "StrainStepDataset",
    "SyntheticSpec",
    "generate_synthetic",
    "read_strain_step",
    "write_strain_step",
    "build_p0",
    "build_p0_eps",
    "build_p1",
    "GrainPartition",
    "reconstruct_tex",
    "reconstruct_louvain",
    "build_disorientation_graph",
    "merge_periodic_fragments",
    "build_global_voxelization",
    "RunConfig",
    "run_pipeline",
    "flow_curve",
]
