"""Shared fixtures: small synthetic datasets and assembled geometry stacks."""

import numpy as np
import pytest

from grainmap import rve_io
from grainmap.grain_reconstruct import merge_periodic_fragments, reconstruct_tex
from grainmap.point_clouds import SpatialBinIndex, build_p0, build_p1


@pytest.fixture(scope="session")
def ds16():
    """16^3 lattice, 8 grains, no planted fields."""
    return rve_io.generate_synthetic(
        rve_io.SyntheticSpec(grid_dims=(16, 16, 16), n_grains=8, seed=3)
    )


@pytest.fixture(scope="session")
def stack16(ds16):
    """Partition, clouds, and merged geometry for ds16."""
    part = reconstruct_tex(ds16)
    p0 = build_p0(ds16.positions)
    periods = np.full(3, ds16.rve_edge)
    p1 = build_p1(p0, periods)
    geo = merge_periodic_fragments(part, p1, ds16.spacing, on_wrap="skip")
    p1_index = SpatialBinIndex.build(p1.positions, 2.0 * ds16.spacing)
    return {"dataset": ds16, "partition": part, "p0": p0, "p1": p1,
            "geometry": geo, "p1_index": p1_index,
            "periods": periods}


def make_bicrystal(n=12, angle_deg=30.0, axis=(0.0, 0.0, 1.0), seed=0):
    """Two grains split by the plane x = n/2 - 0.5 on an n^3 lattice.

    The second grain is the first rotated by angle_deg about axis, so the
    disorientation across the interface is exactly angle_deg (below 45 deg
    the cubic fundamental zone does not fold it).
    """
    from grainmap.tensor_kernels import qmul, quat_from_axis_angle

    rng = np.random.default_rng(seed)
    q_a = rng.normal(size=4)
    q_a /= np.linalg.norm(q_a)
    rot = quat_from_axis_angle(np.asarray(axis, float), angle_deg)
    q_b = qmul(q_a, rot)

    ii, jj, kk = np.meshgrid(np.arange(n), np.arange(n), np.arange(n),
                             indexing="ij")
    pos = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1).astype(float)
    labels = (pos[:, 0] >= n // 2).astype(np.uint32)
    q = np.where(labels[:, None] == 0, q_a, q_b)
    npts = pos.shape[0]
    return rve_io.StrainStepDataset(
        positions=pos,
        def_grad=np.broadcast_to(np.eye(3), (npts, 3, 3)).copy(),
        piola_stress=np.zeros((npts, 3, 3)),
        orientation=q,
        texture_id=labels,
        grid_dims=(n, n, n),
        rve_edge=float(n),
        strain_label=0.0,
    )


@pytest.fixture(scope="session")
def bicrystal12():
    return make_bicrystal(n=12, angle_deg=30.0)


def make_blocks27(pair_angle_deg=5.0, seed=0, min_sep_deg=20.0):
    """27 cubic grains of 6^3 points tiling an 18^3 lattice.

    Blocks 0 and 1 (adjacent along z) differ by pair_angle_deg; every other
    block pair is at least min_sep_deg apart, so only the planted pair sits
    near a clustering decision boundary.  Returns (dataset, labels).
    """
    from grainmap.tensor_kernels import (
        disorientation_angles, qmul, quat_from_axis_angle)

    n = 18
    ii, jj, kk = np.meshgrid(*([np.arange(n)] * 3), indexing="ij")
    pos = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], 1).astype(float)
    labels = ((ii // 6) * 9 + (jj // 6) * 3 + (kk // 6)).ravel()

    rng = np.random.default_rng(seed)
    qs = np.empty((27, 4))
    qs[0] = rng.normal(size=4)
    qs[0] /= np.linalg.norm(qs[0])
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    qs[1] = qmul(qs[0], quat_from_axis_angle(axis, pair_angle_deg))
    accepted = 2
    while accepted < 27:
        cand = rng.normal(size=4)
        cand /= np.linalg.norm(cand)
        seps = [float(disorientation_angles(qs[a], cand))
                for a in range(accepted)]
        if min(seps) >= min_sep_deg:
            qs[accepted] = cand
            accepted += 1

    npts = pos.shape[0]
    ds = rve_io.StrainStepDataset(
        positions=pos,
        def_grad=np.broadcast_to(np.eye(3), (npts, 3, 3)).copy(),
        piola_stress=np.zeros((npts, 3, 3)),
        orientation=qs[labels],
        texture_id=labels.astype(np.uint32),
        grid_dims=(n, n, n),
        rve_edge=float(n),
        strain_label=0.0,
    )
    return ds, labels


@pytest.fixture(scope="session")
def blocks27():
    return make_blocks27()
