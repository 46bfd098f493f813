"""Command-line entry points: run, generate, flowcurve."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .errors import GrainmapError
from .pipeline import config_from_mapping, flow_curve, run_pipeline
from .rve_io import SyntheticSpec, generate_synthetic, parse_config, \
    read_strain_step, write_strain_step
from .spatial_stats import write_flow_curve_csv

log = logging.getLogger(__name__)


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}")
    return tuple(parts)


def _parse_pair(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected A,B, got {text!r}")
    return tuple(parts)


def _parse_affine(text: str) -> np.ndarray:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 9:
        raise argparse.ArgumentTypeError("affine needs 9 comma-separated reals")
    return np.array(parts).reshape(3, 3)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grainmap",
        description="Grain reconstruction and boundary-distance statistics "
                    "for periodic crystal-plasticity point clouds.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline over strain steps")
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--input", action="append", dest="inputs", metavar="FILE",
                     help="strain-step file (repeatable)")
    run.add_argument("--outdir")
    run.add_argument("--recon", choices=("tex", "louvain", "none"))
    run.add_argument("--kl", type=float, help="Louvain penalization K_L")
    run.add_argument("--qc", type=float, help="Louvain modularity gain cutoff")
    run.add_argument("--louvain-seed", type=int, dest="louvain_seed")
    run.add_argument("--method", action="append", dest="methods",
                     choices=("dis", "sdf", "vor"), help="repeatable")
    run.add_argument("--radius", type=float, help="DIS search radius")
    run.add_argument("--theta-c", type=float, dest="theta_c",
                     help="DIS disorientation threshold, degrees")
    run.add_argument("--dcell", type=float, help="SDF voxel size")
    run.add_argument("--guard", type=float, help="VOR guard zone")
    run.add_argument("--rlv", type=float, help="graph edge radius")
    run.add_argument("--eps", type=float, help="guard shell fraction")
    run.add_argument("--bin-lo", type=float, dest="bin_lo")
    run.add_argument("--bin-hi", type=float, dest="bin_hi")
    run.add_argument("--bin-step", type=float, dest="bin_step")
    run.add_argument("--step-workers", type=int, dest="step_workers")
    run.add_argument("--workers", type=int)
    run.add_argument("--no-bvh", action="store_true", dest="no_bvh",
                     default=None, help="exhaustive facet scans (debug)")
    run.add_argument("--dynamic", action="store_true", default=None,
                     help="dynamic intra-step scheduling")
    run.add_argument("--export-hulls", action="store_true",
                     dest="export_hulls", default=None)

    gen = sub.add_parser("generate", help="write a synthetic strain step")
    gen.add_argument("--grains", type=int, required=True)
    gen.add_argument("--dims", type=_parse_dims, required=True,
                     metavar="NX[,NY,NZ]")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--affine", type=_parse_affine, metavar="F11,...,F33")
    gen.add_argument("--gradient", type=_parse_pair, metavar="SLOPE,MAX",
                     help="planted disorientation gradient")
    gen.add_argument("--stress", type=_parse_pair, metavar="MEAN,DELTA",
                     help="planted sigma_33 field")
    gen.add_argument("-o", "--output", required=True)

    flow = sub.add_parser("flowcurve", help="flow-curve CSV from strain steps")
    flow.add_argument("files", nargs="+")
    flow.add_argument("-o", "--output", required=True)
    return parser


def _cmd_run(args) -> int:
    raw = parse_config(args.config) if args.config else {}
    overrides = {
        key: getattr(args, key)
        for key in ("inputs", "outdir", "recon", "kl", "qc", "louvain_seed",
                    "methods", "radius", "theta_c", "dcell", "guard", "rlv",
                    "eps", "bin_lo", "bin_hi", "bin_step", "step_workers",
                    "workers", "no_bvh", "dynamic", "export_hulls")
        if getattr(args, key) is not None
    }
    raw.update(overrides)
    return run_pipeline(config_from_mapping(raw))


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(
        grid_dims=args.dims,
        n_grains=args.grains,
        seed=args.seed,
        affine_F=args.affine,
        planted_gradient=args.gradient,
        planted_stress=args.stress,
    )
    write_strain_step(generate_synthetic(spec), args.output)
    return 0


def _cmd_flowcurve(args) -> int:
    points = flow_curve(read_strain_step(f) for f in args.files)
    points.sort(key=lambda p: p.strain_label)
    write_flow_curve_csv(points, args.output)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "generate":
            return _cmd_generate(args)
        return _cmd_flowcurve(args)
    except GrainmapError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
