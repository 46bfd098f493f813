"""End-to-end post-processing pipeline over strain steps.

Each input file is one independent step.  Steps are assigned round-robin to
task slots (step i to slot i mod step_workers) and never share mutable
state; within a step, chunk- and grain-level work fans out over an optional
thread pool.  All reductions preserve task order, so every output file is
byte-identical for any worker configuration.  Per-step failures are logged
and isolated; the run exits nonzero if any step failed.

The profile report records wall seconds and the tracemalloc peak per phase.
tracemalloc is process-global: with more than one step slot the peaks of
overlapping phases bleed into each other, so per-phase numbers are only
meaningful at step_workers = 1.
"""

from __future__ import annotations

import json
import logging
import os
import time
import tracemalloc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import distancing, spatial_stats
from .errors import SpecViolation
from .grain_reconstruct import (
    build_disorientation_graph,
    grain_mean_orientations,
    merge_periodic_fragments,
    reconstruct_louvain,
    reconstruct_tex,
)
from .point_clouds import SpatialBinIndex, build_p0, build_p0_eps, build_p1
from .rve_io import read_strain_step
from .tensor_kernels import rve_averages

log = logging.getLogger(__name__)

METHODS = ("dis", "sdf", "vor")
RECONSTRUCTIONS = ("tex", "louvain", "none")


@dataclass
class RunConfig:
    inputs: list
    outdir: Path
    recon: str = "tex"
    kl: float = 75.0
    qc: float = 0.01
    louvain_seed: int = 0
    methods: tuple = ("sdf",)
    radius: float | None = None       # DIS search radius; default 0.1 * rve_edge
    theta_c: float = 15.0
    dcell: float | None = None        # default spacing / 2
    guard: float | None = None        # default 3 * spacing
    rlv: float | None = None          # graph radius; default 2 * spacing
    eps: float = 0.1
    bin_lo: float = 0.0
    bin_hi: float = 24.0
    bin_step: float = 0.2
    step_workers: int = 1
    workers: int = 1
    no_bvh: bool = False
    dynamic: bool = False
    export_hulls: bool = False

    def validate(self) -> None:
        if not self.inputs:
            raise SpecViolation("no input files")
        if self.recon not in RECONSTRUCTIONS:
            raise SpecViolation(f"unknown reconstruction {self.recon!r}")
        if not self.methods:
            raise SpecViolation("no distancing methods requested")
        for m in self.methods:
            if m not in METHODS:
                raise SpecViolation(f"unknown method {m!r}")
        if self.recon == "none" and any(m in ("sdf", "vor") for m in self.methods):
            raise SpecViolation("sdf/vor distancing requires a reconstruction")
        if self.step_workers < 1 or self.workers < 1:
            raise SpecViolation("worker counts must be >= 1")
        if not self.bin_hi > self.bin_lo or not self.bin_step > 0.0:
            raise SpecViolation("bad binning interval")


_BOOL_TRUE = ("1", "true", "yes", "on")


def config_from_mapping(raw: dict) -> RunConfig:
    """Typed RunConfig from a flat key=value mapping (config file or CLI)."""
    def split_list(v):
        return [s for s in v.replace(",", " ").split() if s]

    kw = {}
    for key, val in raw.items():
        if val is None:
            continue
        if key == "inputs":
            kw["inputs"] = [Path(p) for p in
                            (split_list(val) if isinstance(val, str) else val)]
        elif key == "outdir":
            kw["outdir"] = Path(val)
        elif key == "methods":
            kw["methods"] = tuple(
                m.lower() for m in
                (split_list(val) if isinstance(val, str) else val))
        elif key == "recon":
            kw["recon"] = str(val).lower()
        elif key in ("kl", "qc", "radius", "theta_c", "dcell", "guard", "rlv",
                     "eps", "bin_lo", "bin_hi", "bin_step"):
            kw[key] = float(val)
        elif key in ("louvain_seed", "step_workers", "workers"):
            kw[key] = int(val)
        elif key in ("no_bvh", "dynamic", "export_hulls"):
            kw[key] = (str(val).strip().lower() in _BOOL_TRUE
                       if isinstance(val, str) else bool(val))
        else:
            raise SpecViolation(f"unknown config key {key!r}")
    if "inputs" not in kw:
        raise SpecViolation("config must list inputs")
    if "outdir" not in kw:
        raise SpecViolation("config must set outdir")
    return RunConfig(**kw)


def apply_env_workers(config: RunConfig) -> RunConfig:
    """GRAINMAP_WORKERS=I or S,I overrides (step_workers, workers)."""
    raw = os.environ.get("GRAINMAP_WORKERS", "").strip()
    if not raw:
        return config
    parts = raw.split(",")
    try:
        if len(parts) == 1:
            return replace(config, workers=int(parts[0]))
        if len(parts) == 2:
            return replace(config, step_workers=int(parts[0]),
                           workers=int(parts[1]))
    except ValueError:
        pass
    raise SpecViolation(f"cannot parse GRAINMAP_WORKERS={raw!r}")


class FlowCurvePoint(NamedTuple):
    strain_label: float
    eps_vm_bar: float
    sigma_vm_bar: float


def flow_curve(datasets) -> list:
    """Per-dataset RVE averages of the per-point von Mises values."""
    out = []
    for ds in datasets:
        avg = rve_averages(ds.def_grad, ds.piola_stress)
        out.append(FlowCurvePoint(ds.strain_label, avg.eps_vm_bar,
                                  avg.sigma_vm_bar))
    return out


class _StepProfile:
    """Wall clock + tracemalloc peak per phase, collected in phase order."""

    def __init__(self, step: int, slot: int):
        self.step = step
        self.slot = slot
        self.rows = []

    def phase(self, name: str):
        return _Phase(self, name)


class _Phase:
    def __init__(self, prof: _StepProfile, name: str):
        self.prof = prof
        self.name = name

    def __enter__(self):
        tracemalloc.reset_peak()
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        wall = time.perf_counter() - self.t0
        _, peak = tracemalloc.get_traced_memory()
        self.prof.rows.append({
            "step": self.prof.step,
            "phase": self.name,
            "wall_s": round(wall, 6),
            "peak_bytes": int(peak),
            "slot": self.prof.slot,
        })
        return False


@dataclass
class StepResult:
    step: int
    path: Path
    ok: bool
    error: str = ""
    flow: FlowCurvePoint | None = None
    profile_rows: list = field(default_factory=list)


def _step_dir(outdir: Path, step: int, path: Path) -> Path:
    return outdir / f"step{step:03d}_{Path(path).stem}"


def _run_step(step: int, slot: int, path: Path, cfg: RunConfig,
              executor, workers: int) -> StepResult:
    prof = _StepProfile(step, slot)
    result = StepResult(step, Path(path), ok=False, profile_rows=prof.rows)
    try:
        with prof.phase("ingest"):
            ds = read_strain_step(path)
        with prof.phase("preprocess"):
            avg = rve_averages(ds.def_grad, ds.piola_stress)
            result.flow = FlowCurvePoint(ds.strain_label, avg.eps_vm_bar,
                                         avg.sigma_vm_bar)
            periods = float(ds.rve_edge) * np.diagonal(avg.F_bar).copy()
        spacing = ds.spacing
        radius = cfg.radius if cfg.radius is not None else 0.1 * ds.rve_edge
        rlv = cfg.rlv if cfg.rlv is not None else 2.0 * spacing
        dcell = cfg.dcell if cfg.dcell is not None else 0.5 * spacing
        need_eps = "dis" in cfg.methods or cfg.recon == "louvain"
        need_p1 = any(m in ("sdf", "vor") for m in cfg.methods)
        with prof.phase("clouds"):
            p0 = build_p0(ds.positions)
            p0_eps = dis_index = lv_index = None
            if need_eps:
                consumer = max(radius if "dis" in cfg.methods else 0.0,
                               rlv if cfg.recon == "louvain" else 0.0)
                max_edge = float((p0.base_box[1] - p0.base_box[0]).max())
                eff_eps = max(cfg.eps, 1.05 * consumer / max_edge)
                p0_eps = build_p0_eps(p0, periods, eff_eps)
                if "dis" in cfg.methods:
                    dis_index = SpatialBinIndex.build(p0_eps.positions, radius)
                if cfg.recon == "louvain":
                    lv_index = SpatialBinIndex.build(p0_eps.positions, rlv)
            p1 = p1_index = None
            if need_p1:
                p1 = build_p1(p0, periods)
                p1_index = SpatialBinIndex.build(p1.positions, 2.0 * spacing)
        with prof.phase("reconstruct"):
            partition = means = None
            if cfg.recon == "tex":
                partition = reconstruct_tex(ds)
            elif cfg.recon == "louvain":
                graph = build_disorientation_graph(
                    ds, p0_eps, lv_index, cfg.kl, rlv, executor, workers,
                    cfg.dynamic)
                partition = reconstruct_louvain(graph, cfg.qc, cfg.louvain_seed)
            if partition is not None:
                means = grain_mean_orientations(ds, partition)
        with prof.phase("simplify"):
            geometry = None
            if need_p1:
                geometry = merge_periodic_fragments(
                    partition, p1, spacing, on_wrap="skip", executor=executor,
                    workers=workers, dynamic=cfg.dynamic)
        all_records = {}
        hulls = None
        for method in cfg.methods:
            with prof.phase(f"distance_{method}"):
                if method == "dis":
                    rec = distancing.distance_dis(
                        ds, p0_eps, dis_index, radius, cfg.theta_c, executor,
                        workers, cfg.dynamic)
                elif method == "sdf":
                    rec, _ = distancing.distance_sdf(
                        geometry, p1, partition.labels, dcell,
                        p1_index=p1_index, executor=executor, workers=workers,
                        dynamic=cfg.dynamic)
                else:
                    rec, hulls = distancing.distance_voronoi(
                        geometry, p1, cfg.guard, use_bvh=not cfg.no_bvh,
                        p1_index=p1_index, executor=executor, workers=workers,
                        dynamic=cfg.dynamic, keep_hulls=cfg.export_hulls)
                distancing.attach_state(rec, ds, partition, means)
                all_records[method] = rec
        with prof.phase("stats"):
            binnings = {}
            for method, rec in all_records.items():
                per_scalar = {}
                for name in rec.scalar_names():
                    per_scalar[name] = spatial_stats.bin_records(
                        rec.distance, {name: rec.scalar_values(name)},
                        cfg.bin_lo, cfg.bin_hi, cfg.bin_step)
                binnings[method] = per_scalar
            sizes = spatial_stats.grain_sizes(partition) if partition else None
        with prof.phase("output"):
            sdir = _step_dir(cfg.outdir, step, path)
            sdir.mkdir(parents=True, exist_ok=True)
            recon_tag = partition.method.lower() if partition else "none"
            for method, per_scalar in binnings.items():
                for name, binning in per_scalar.items():
                    out = sdir / f"{method}_{recon_tag}_{name}.csv"
                    spatial_stats.write_binning_csv(binning, name, out)
            if sizes is not None:
                spatial_stats.write_grain_sizes_csv(sizes, sdir / "grain_sizes.csv")
            if cfg.export_hulls and hulls:
                distancing.export_hulls_obj(hulls, sdir / "hulls.obj")
        result.ok = True
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        log.error("step %d (%s) failed: %s", step, path, result.error)
    return result


def run_pipeline(config: RunConfig) -> int:
    config = apply_env_workers(config)
    config.validate()
    config.outdir.mkdir(parents=True, exist_ok=True)
    n = len(config.inputs)
    sw = min(config.step_workers, n)
    results: list = [None] * n
    started_tm = tracemalloc.is_tracing()
    if not started_tm:
        tracemalloc.start()
    try:
        def run_slot(slot: int) -> None:
            inner = (ThreadPoolExecutor(max_workers=config.workers)
                     if config.workers > 1 else None)
            try:
                for i in range(slot, n, sw):
                    results[i] = _run_step(i, slot, config.inputs[i], config,
                                           inner, config.workers)
            finally:
                if inner is not None:
                    inner.shutdown()

        if sw > 1:
            with ThreadPoolExecutor(max_workers=sw) as pool:
                list(pool.map(run_slot, range(sw)))
        else:
            run_slot(0)
    finally:
        if not started_tm:
            tracemalloc.stop()
    flow_rows = [(r.flow.strain_label, r.flow.eps_vm_bar, r.flow.sigma_vm_bar)
                 for r in results if r.ok]
    flow_rows.sort(key=lambda row: row[0])
    spatial_stats.write_flow_curve_csv(flow_rows, config.outdir / "flow_curve.csv")
    profile_rows = []
    for r in results:
        profile_rows.extend(r.profile_rows)
    with open(config.outdir / "profile.json", "w") as fh:
        json.dump(profile_rows, fh, indent=2)
        fh.write("\n")
    failed = [r for r in results if not r.ok]
    if failed:
        log.error("%d of %d steps failed: %s", len(failed), n,
                  ", ".join(str(r.step) for r in failed))
    return 1 if failed else 0
