"""Tensor and orientation kernels against independent oracles.

The disorientation oracle composes rotation matrices through
scipy.spatial.transform with the 24 right-handed signed permutation
matrices enumerated here, so it shares no quaternion convention with the
package code.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from grainmap import tensor_kernels as tk
from grainmap.errors import EmptyInput, NonUnitInput, SingularF


def _cubic_matrices():
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if np.linalg.det(m) > 0.5:
                mats.append(m)
    return np.array(mats)


CUBIC_MATS = _cubic_matrices()


def _rotmat(q):
    """Scalar-first quaternion to rotation matrix via scipy."""
    return Rotation.from_quat(np.asarray(q)[[1, 2, 3, 0]]).as_matrix()


def oracle_disorientation_deg(qa, qb):
    m = _rotmat(qa).T @ _rotmat(qb)
    best = 180.0
    for s in CUBIC_MATS:
        tr = np.trace(s @ m)
        ang = np.degrees(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))
        best = min(best, ang)
    return best


@st.composite
def unit_quaternions(draw):
    v = np.array([draw(st.floats(-1.0, 1.0)) for _ in range(4)])
    n = np.linalg.norm(v)
    if n < 0.3:
        v = np.array([1.0, 0.3, -0.2, 0.1])
        n = np.linalg.norm(v)
    return v / n


@st.composite
def unit_axes(draw):
    v = np.array([draw(st.floats(-1.0, 1.0)) for _ in range(3)])
    n = np.linalg.norm(v)
    if n < 0.3:
        v = np.array([1.0, 0.5, -0.25])
        n = np.linalg.norm(v)
    return v / n


class TestCubicSymmetry:
    def test_group_size_and_units(self):
        q = tk.CUBIC_SYMMETRY
        assert q.shape == (24, 4)
        assert np.allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-12)

    def test_elements_distinct_as_rotations(self):
        q = tk.CUBIC_SYMMETRY
        dots = np.abs(q @ q.T)
        np.fill_diagonal(dots, 0.0)
        assert dots.max() < 1.0 - 1e-9

    def test_closed_under_multiplication(self):
        q = tk.CUBIC_SYMMETRY
        for a in q:
            prod = tk.qmul(np.broadcast_to(a, q.shape), q)
            dots = np.abs(prod @ q.T)
            assert np.allclose(dots.max(axis=1), 1.0, atol=1e-9)

    def test_matches_signed_permutation_matrices(self):
        got = {tuple(np.round(_rotmat(s)).astype(int).ravel())
               for s in tk.CUBIC_SYMMETRY}
        want = {tuple(m.astype(int).ravel()) for m in CUBIC_MATS}
        assert got == want


class TestQuaternionAlgebra:
    @settings(max_examples=50, deadline=None)
    @given(unit_quaternions(), unit_quaternions())
    def test_qmul_composes_rotations(self, a, b):
        assert np.allclose(_rotmat(tk.qmul(a, b)), _rotmat(a) @ _rotmat(b),
                           atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(unit_quaternions())
    def test_qconj_inverts(self, a):
        prod = tk.qmul(a, tk.qconj(a))
        assert np.allclose(prod, [1.0, 0.0, 0.0, 0.0], atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(unit_axes(), st.floats(1.0, 179.0))
    def test_axis_angle_matches_scipy(self, axis, deg):
        q = tk.quat_from_axis_angle(axis, deg)
        want = Rotation.from_rotvec(np.radians(deg) * axis).as_matrix()
        assert np.allclose(_rotmat(q), want, atol=1e-12)


class TestDisorientation:
    def test_identity_pair_is_one(self):
        # one ulp of slack: qconj(q)*q lands within float eps of (1,0,0,0)
        q = np.array([0.3, -0.5, 0.7, 0.4])
        q /= np.linalg.norm(q)
        assert float(tk.misorientation_scalar_max(q, q)) == pytest.approx(
            1.0, abs=5e-16)

    @settings(max_examples=60, deadline=None)
    @given(unit_quaternions(), unit_axes(), st.floats(0.5, 44.0))
    def test_known_angle_recovered(self, base, axis, deg):
        qb = tk.qmul(base, tk.quat_from_axis_angle(axis, deg))
        got = tk.disorientation_angles(base, qb)
        assert got == pytest.approx(deg, abs=1e-7)

    def test_ninety_degree_rotations_are_equivalent(self):
        base = np.array([1.0, 0.0, 0.0, 0.0])
        for axis in np.eye(3):
            qb = tk.quat_from_axis_angle(axis, 90.0)
            assert tk.disorientation_angles(base, qb) == pytest.approx(0.0, abs=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(unit_quaternions(), unit_quaternions())
    def test_matches_matrix_oracle(self, qa, qb):
        # arccos near the zero-angle pole turns 1e-16 scalar noise into
        # ~2e-6 deg, so the angle tolerance is 1e-5 deg
        got = float(tk.disorientation_angles(qa, qb))
        want = oracle_disorientation_deg(qa, qb)
        assert got == pytest.approx(want, abs=1e-5)

    @settings(max_examples=40, deadline=None)
    @given(unit_quaternions(), unit_quaternions(), st.integers(0, 23))
    def test_invariances(self, qa, qb, k):
        ref = tk.misorientation_scalar_max(qa, qb)
        sym = tk.qmul(qb, tk.CUBIC_SYMMETRY[k])
        assert tk.misorientation_scalar_max(qa, sym) == pytest.approx(ref, abs=1e-12)
        assert tk.misorientation_scalar_max(qa, -qb) == pytest.approx(ref, abs=1e-12)
        assert tk.misorientation_scalar_max(qb, qa) == pytest.approx(ref, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(unit_quaternions(), unit_quaternions())
    def test_fundamental_zone_bound(self, qa, qb):
        assert float(tk.disorientation_angles(qa, qb)) <= 62.7994 + 1e-6

    def test_batch_matches_singles(self):
        rng = np.random.default_rng(11)
        qa = rng.normal(size=(32, 4))
        qa /= np.linalg.norm(qa, axis=1, keepdims=True)
        qb = rng.normal(size=(32, 4))
        qb /= np.linalg.norm(qb, axis=1, keepdims=True)
        batch = tk.misorientation_scalar_max(qa, qb)
        singles = [tk.misorientation_scalar_max(a, b) for a, b in zip(qa, qb)]
        assert np.array_equal(batch, np.array(singles))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 62.7))
    def test_angle_scalar_roundtrip(self, deg):
        assert tk.scalar_max_to_angle_deg(
            np.array(tk.angle_deg_to_scalar(deg))
        ) == pytest.approx(deg, abs=1e-9)

    def test_axis_reported(self):
        base = np.array([1.0, 0.0, 0.0, 0.0])
        qb = tk.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 25.0)
        d = tk.disorientation_cubic(base, qb)
        assert d.angle == pytest.approx(25.0, abs=1e-9)
        assert abs(d.axis[2]) == pytest.approx(1.0, abs=1e-12)

    def test_non_unit_rejected(self):
        good = np.array([1.0, 0.0, 0.0, 0.0])
        with pytest.raises(NonUnitInput):
            tk.disorientation_angles(good, 1.01 * good)


class TestMeanOrientation:
    def test_identical_inputs(self):
        q = np.array([0.2, 0.4, -0.6, 0.5])
        q /= np.linalg.norm(q)
        m = tk.mean_orientation(np.tile(q, (5, 1)))
        assert abs(float(m @ q)) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_pair_bisects(self):
        q0 = np.array([0.9, 0.1, -0.3, 0.2])
        q0 /= np.linalg.norm(q0)
        plus = tk.qmul(q0, tk.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 10.0))
        minus = tk.qmul(q0, tk.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), -10.0))
        m = tk.mean_orientation(np.stack([plus, minus]))
        assert abs(float(m @ q0)) == pytest.approx(1.0, abs=1e-12)

    def test_sign_and_symmetry_variant_invariant(self):
        rng = np.random.default_rng(5)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        qs = np.stack([q, -q, tk.qmul(q, tk.CUBIC_SYMMETRY[7])])
        m = tk.mean_orientation(qs)
        assert abs(float(m @ q)) == pytest.approx(1.0, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            tk.mean_orientation(np.empty((0, 4)))


class TestStressStrain:
    def test_cauchy_roundtrip(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            F = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
            if np.linalg.det(F) <= 0.1:
                continue
            s = rng.normal(size=(3, 3))
            sigma = 0.5 * (s + s.T)
            P = np.linalg.det(F) * sigma @ np.linalg.inv(F).T
            got = tk.cauchy_from(F, P)
            assert np.allclose(got, sigma, atol=1e-12 * max(1.0, abs(sigma).max()))

    def test_cauchy_identity_f(self):
        s = np.arange(9.0).reshape(3, 3)
        got = tk.cauchy_from(np.eye(3), s)
        assert np.allclose(got, 0.5 * (s + s.T), atol=0)

    def test_cauchy_batch_matches_loop(self):
        rng = np.random.default_rng(3)
        F = np.eye(3) + 0.1 * rng.normal(size=(8, 3, 3))
        P = rng.normal(size=(8, 3, 3))
        batch = tk.cauchy_from(F, P)
        for i in range(8):
            assert np.array_equal(batch[i], tk.cauchy_from(F[i], P[i]))

    def test_cauchy_singular_rejected(self):
        with pytest.raises(SingularF):
            tk.cauchy_from(np.diag([1.0, 1.0, 0.0]), np.eye(3))

    def test_vm_stress_uniaxial(self):
        s = np.zeros((3, 3))
        s[2, 2] = -140.0
        assert float(tk.von_mises_stress(s)) == pytest.approx(140.0, rel=1e-14)

    def test_vm_stress_shear(self):
        s = np.zeros((3, 3))
        s[0, 1] = s[1, 0] = 3.0
        assert float(tk.von_mises_stress(s)) == pytest.approx(3.0 * np.sqrt(3.0),
                                                              rel=1e-14)

    def test_vm_stress_hydrostatic_is_zero(self):
        assert float(tk.von_mises_stress(-7.5 * np.eye(3))) == pytest.approx(
            0.0, abs=1e-13)

    def test_vm_strain_incompressible_uniaxial(self):
        lam = 1.3
        F = np.diag([lam, lam**-0.5, lam**-0.5])
        assert float(tk.von_mises_strain(F)) == pytest.approx(np.log(lam),
                                                              rel=1e-12)

    def test_vm_strain_diagonal_oracle(self):
        d = np.array([1.2, 0.9, 1.05])
        e = np.log(d)
        dev = e - e.mean()
        want = np.sqrt(2.0 / 3.0 * (dev**2).sum())
        assert float(tk.von_mises_strain(np.diag(d))) == pytest.approx(want,
                                                                       rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(unit_axes(), st.floats(1.0, 179.0))
    def test_vm_strain_rotation_invariant(self, axis, deg):
        F = np.diag([1.15, 0.95, 1.02])
        R = Rotation.from_rotvec(np.radians(deg) * axis).as_matrix()
        assert float(tk.von_mises_strain(R @ F)) == pytest.approx(
            float(tk.von_mises_strain(F)), rel=1e-10)

    def test_vm_strain_identity_is_zero(self):
        assert float(tk.von_mises_strain(np.eye(3))) == 0.0

    def test_rve_averages_two_points(self):
        F = np.stack([np.eye(3), np.diag([1.2, 1.0, 1.0 / 1.2])])
        sigma1 = np.zeros((3, 3))
        sigma1[2, 2] = -100.0
        P = np.stack([
            sigma1,
            np.linalg.det(F[1]) * sigma1 @ np.linalg.inv(F[1]).T,
        ])
        av = tk.rve_averages(F, P)
        assert np.allclose(av.F_bar, 0.5 * (F[0] + F[1]), atol=0)
        assert np.allclose(av.P_bar, 0.5 * (P[0] + P[1]), atol=0)
        assert av.sigma_vm_bar == pytest.approx(100.0, rel=1e-12)
        want_eps = 0.5 * float(tk.von_mises_strain(F[1]))
        assert av.eps_vm_bar == pytest.approx(want_eps, rel=1e-12)
