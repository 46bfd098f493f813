"""Compare the compiled and pure-numpy kernel backends on real workloads.

The backend is chosen at import time, so the parent process spawns one
child per backend (GRAINMAP_PURE=1 forces the numpy fallback) and prints
a side-by-side table.  Each operation is dominated by one or two hot
kernels:

    graph      graph_edges
    louvain    louvain_level
    dis        dis_scan
    merge      fixed_radius_components
    sdf        voxel_nearest + eikonal_sweep
    vor        voronoi_cells + vor_distances

Usage: python3 benchmarks/bench_kernels.py [--dims 24] [--grains 12]
       [--repeats 3] [--json]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def child(args):
    import numpy as np

    from grainmap import _kernels, distancing
    from grainmap.grain_reconstruct import (
        build_disorientation_graph,
        merge_periodic_fragments,
        reconstruct_louvain,
        reconstruct_tex,
    )
    from grainmap.point_clouds import (
        SpatialBinIndex,
        build_p0,
        build_p0_eps,
        build_p1,
    )
    from grainmap.rve_io import SyntheticSpec, generate_synthetic

    ds = generate_synthetic(
        SyntheticSpec((args.dims,) * 3, args.grains, args.seed))
    spacing = ds.spacing
    radius = 2.5 * spacing
    periods = np.full(3, float(ds.rve_edge))
    p0 = build_p0(ds.positions)
    max_edge = float((p0.base_box[1] - p0.base_box[0]).max())
    p0e = build_p0_eps(p0, periods, max(0.1, 1.05 * radius / max_edge))
    idx = SpatialBinIndex.build(p0e.positions, radius)
    p1 = build_p1(p0, periods)
    p1_index = SpatialBinIndex.build(p1.positions, 2.0 * spacing)
    part = reconstruct_tex(ds)
    graph = build_disorientation_graph(ds, p0e, idx, 300.0, radius)
    geo = merge_periodic_fragments(part, p1, spacing, on_wrap="skip")

    ops = {
        "graph": lambda: build_disorientation_graph(ds, p0e, idx, 300.0,
                                                    radius),
        "louvain": lambda: reconstruct_louvain(graph, seed=0),
        "dis": lambda: distancing.distance_dis(ds, p0e, idx, radius, 15.0),
        "merge": lambda: merge_periodic_fragments(part, p1, spacing,
                                                  on_wrap="skip"),
        "sdf": lambda: distancing.distance_sdf(geo, p1, part.labels,
                                               0.5 * spacing,
                                               p1_index=p1_index),
        "vor": lambda: distancing.distance_voronoi(geo, p1, 3.0 * spacing,
                                                   p1_index=p1_index),
    }
    times = {}
    for name, fn in ops.items():
        samples = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        times[name] = float(np.median(samples))
    print(json.dumps({"backend": _kernels.BACKEND, "times": times}))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, default=24)
    ap.add_argument("--grains", type=int, default=12)
    ap.add_argument("--seed", type=int, default=12)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--json", action="store_true",
                    help="emit machine-readable results")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args)
        return

    results = {}
    for forced_pure in ("0", "1"):
        env = dict(os.environ, GRAINMAP_PURE=forced_pure)
        cmd = [sys.executable, os.path.abspath(__file__), "--child",
               "--dims", str(args.dims), "--grains", str(args.grains),
               "--seed", str(args.seed), "--repeats", str(args.repeats)]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True,
                             check=True)
        payload = json.loads(out.stdout.strip().splitlines()[-1])
        results[payload["backend"]] = payload["times"]

    if "native" not in results:
        print("compiled backend unavailable; built pure-only", file=sys.stderr)
    if args.json:
        print(json.dumps(results, indent=2))
        return

    pure_t = results["pure"]
    native_t = results.get("native", pure_t)
    print(f"{args.dims}^3 lattice, {args.grains} grains, "
          f"median of {args.repeats}")
    print(f"{'operation':<10} {'native [s]':>12} {'pure [s]':>12} "
          f"{'speedup':>9}")
    for name in pure_t:
        ratio = pure_t[name] / native_t[name] if native_t[name] > 0 else 0.0
        print(f"{name:<10} {native_t[name]:>12.4f} {pure_t[name]:>12.4f} "
              f"{ratio:>8.1f}x")


if __name__ == "__main__":
    main()
