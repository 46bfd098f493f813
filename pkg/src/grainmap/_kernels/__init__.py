"""Hot-kernel backend selection.

The compiled extension is preferred; the pure numpy implementation is used
when the extension is unavailable or when GRAINMAP_PURE is set to a truthy
value.  Both backends implement the same functions with identical arithmetic
(transcendentals are kept out of the kernels), so results match bit for bit,
with one caveat: fixed_radius_components returns component ids whose root
choice is backend-specific; they agree exactly after first-appearance
densification, which is how callers consume them.
"""

from __future__ import annotations

import os

_forced_pure = os.environ.get("GRAINMAP_PURE", "").strip() not in ("", "0")

if _forced_pure:
    from . import pure as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

from . import pure  # always importable, used by parity tests

BACKEND = _impl.BACKEND

dis_scan = _impl.dis_scan
graph_edges = _impl.graph_edges
louvain_level = _impl.louvain_level
fixed_radius_components = _impl.fixed_radius_components
voxel_nearest = _impl.voxel_nearest
eikonal_sweep = _impl.eikonal_sweep
voronoi_cells = _impl.voronoi_cells
vor_distances = _impl.vor_distances
