"""Periodic point clouds and the bucket-grid neighborhood index."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grainmap.errors import RadiusExceedsBucket, SpecViolation
from grainmap.point_clouds import (
    IMAGE_SHIFTS,
    SpatialBinIndex,
    box_query,
    build_p0,
    build_p0_eps,
    build_p1,
    range_query,
)


def lattice_positions(n):
    ii, jj, kk = np.meshgrid(*([np.arange(n)] * 3), indexing="ij")
    return np.stack([ii.ravel(), jj.ravel(), kk.ravel()], 1).astype(float)


class TestImageShifts:
    def test_origin_first_then_lexicographic(self):
        assert IMAGE_SHIFTS.shape == (27, 3)
        assert np.array_equal(IMAGE_SHIFTS[0], [0.0, 0.0, 0.0])
        want = [s for s in itertools.product((-1, 0, 1), repeat=3)
                if s != (0, 0, 0)]
        assert np.array_equal(IMAGE_SHIFTS[1:], np.array(want, float))


class TestClouds:
    def test_p0(self):
        pos = lattice_positions(4)
        p0 = build_p0(pos)
        assert p0.kind == "P0"
        assert np.array_equal(p0.owner, np.arange(64))
        assert np.array_equal(p0.base_box, [[0.0, 0.0, 0.0], [3.0, 3.0, 3.0]])
        with pytest.raises(SpecViolation):
            build_p0(np.empty((0, 3)))

    def test_p1_layout(self):
        pos = lattice_positions(3)
        p0 = build_p0(pos)
        periods = np.array([3.0, 3.0, 3.0])
        p1 = build_p1(p0, periods)
        n = 27
        assert p1.n_entries == 27 * n
        for img in range(27):
            sl = slice(img * n, (img + 1) * n)
            assert np.array_equal(p1.positions[sl],
                                  pos + IMAGE_SHIFTS[img] * periods)
            assert np.array_equal(p1.owner[sl], np.arange(n))
            assert (p1.image_id[sl] == img).all()
        # owner recoverable from the entry id alone
        e = np.arange(p1.n_entries)
        assert np.array_equal(p1.owner, e % n)

    def test_p0_eps_matches_brute_force(self):
        rng = np.random.default_rng(4)
        pos = rng.uniform(0.0, 10.0, size=(200, 3))
        p0 = build_p0(pos)
        periods = np.array([10.0, 11.0, 12.0])
        eps = 0.15
        cloud = build_p0_eps(p0, periods, eps)

        n = pos.shape[0]
        assert np.array_equal(cloud.positions[:n], pos)
        assert (cloud.image_id[:n] == 0).all()

        thickness = eps * float(np.max(p0.base_box[1] - p0.base_box[0]))
        flo = p0.base_box[0] - thickness
        fhi = p0.base_box[1] + thickness
        want_pos, want_owner, want_img = [pos], [np.arange(n)], [np.zeros(n)]
        for img in range(1, 27):
            shifted = pos + IMAGE_SHIFTS[img] * periods
            keep = np.all((shifted >= flo) & (shifted <= fhi), axis=1)
            want_pos.append(shifted[keep])
            want_owner.append(np.nonzero(keep)[0])
            want_img.append(np.full(int(keep.sum()), img))
        assert np.array_equal(cloud.positions, np.concatenate(want_pos))
        assert np.array_equal(cloud.owner, np.concatenate(want_owner))
        assert np.array_equal(cloud.image_id,
                              np.concatenate(want_img).astype(cloud.image_id.dtype))

    def test_p0_eps_subset_of_p1(self):
        rng = np.random.default_rng(9)
        pos = rng.uniform(0.0, 8.0, size=(100, 3))
        p0 = build_p0(pos)
        periods = np.array([8.0, 8.0, 8.0])
        eps_cloud = build_p0_eps(p0, periods, 0.2)
        p1 = build_p1(p0, periods)
        keys_eps = {tuple(np.round(p, 12)) for p in eps_cloud.positions}
        keys_p1 = {tuple(np.round(p, 12)) for p in p1.positions}
        assert keys_eps <= keys_p1

    def test_p0_eps_rejects_nonpositive(self):
        p0 = build_p0(lattice_positions(3))
        with pytest.raises(SpecViolation):
            build_p0_eps(p0, np.full(3, 3.0), 0.0)


class TestSpatialBinIndex:
    def test_csr_structure(self):
        rng = np.random.default_rng(1)
        pos = rng.uniform(-5.0, 5.0, size=(400, 3))
        idx = SpatialBinIndex.build(pos, 1.25)
        ncells = int(np.prod(idx.dims))
        assert idx.cell_start.shape == (ncells + 1,)
        assert idx.cell_start[0] == 0
        assert idx.cell_start[-1] == 400
        assert (np.diff(idx.cell_start) >= 0).all()
        # every entry is stored in the cell its position hashes to, ascending
        cells = np.floor((pos - idx.box_min) / idx.bucket_width).astype(np.int64)
        cells = np.clip(cells, 0, idx.dims - 1)
        keys = (cells[:, 0] * idx.dims[1] + cells[:, 1]) * idx.dims[2] + cells[:, 2]
        for c in range(ncells):
            entries = idx.cell_entries[idx.cell_start[c]:idx.cell_start[c + 1]]
            assert (np.diff(entries) > 0).all() if entries.size > 1 else True
            assert (keys[entries] == c).all()

    def test_range_query_inclusive_boundary(self):
        pos = lattice_positions(5)
        idx = SpatialBinIndex.build(pos, 1.0)
        got = range_query(idx, pos, np.array([2.0, 2.0, 2.0]), 1.0)
        d = pos[got] - [2.0, 2.0, 2.0]
        assert got.size == 7  # center plus the six axis neighbors at exactly r
        assert ((d * d).sum(axis=1) <= 1.0 + 0).all()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.2, 1.5))
    def test_range_query_matches_linear_scan(self, seed, radius):
        rng = np.random.default_rng(seed)
        pos = rng.uniform(-4.0, 4.0, size=(150, 3))
        idx = SpatialBinIndex.build(pos, 1.5)
        center = rng.uniform(-5.0, 5.0, size=3)
        got = range_query(idx, pos, center, radius)
        d = pos - center
        want = np.nonzero((d * d).sum(axis=1) <= radius * radius)[0]
        assert np.array_equal(np.sort(got), want)

    def test_radius_above_bucket_rejected(self):
        pos = lattice_positions(4)
        idx = SpatialBinIndex.build(pos, 1.0)
        with pytest.raises(RadiusExceedsBucket):
            range_query(idx, pos, np.zeros(3), 1.01)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_box_query_matches_mask(self, seed):
        rng = np.random.default_rng(seed)
        pos = rng.uniform(0.0, 6.0, size=(120, 3))
        idx = SpatialBinIndex.build(pos, 0.9)
        lo = rng.uniform(-1.0, 4.0, size=3)
        hi = lo + rng.uniform(0.5, 4.0, size=3)
        got = box_query(idx, pos, lo, hi)
        want = np.nonzero(np.all((pos >= lo) & (pos <= hi), axis=1))[0]
        assert np.array_equal(got, want)

    def test_single_point(self):
        pos = np.array([[2.0, 3.0, 4.0]])
        idx = SpatialBinIndex.build(pos, 1.0)
        assert np.array_equal(range_query(idx, pos, pos[0], 0.5), [0])
        assert box_query(idx, pos, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).size == 0
