"""Per-point tensor and quaternion algebra.

Quaternions are scalar-first throughout.  All batch operations accept arrays
whose last axes carry the tensor/quaternion components and broadcast over the
leading axes.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, LowConcentration, NonUnitInput, SingularF

log = logging.getLogger(__name__)

_UNIT_TOL = 1e-9

_H = np.sqrt(0.5)


def _cubic_symmetry_quaternions() -> np.ndarray:
    ops = [(1.0, 0.0, 0.0, 0.0)]
    # 90/270 deg about the three cube axes
    for axis in range(3):
        for s in (+_H, -_H):
            v = [0.0, 0.0, 0.0]
            v[axis] = s
            ops.append((_H, *v))
    # 180 deg about the cube axes
    for axis in range(3):
        v = [0.0, 0.0, 0.0]
        v[axis] = 1.0
        ops.append((0.0, *v))
    # 120/240 deg about the body diagonals
    for sx in (+0.5, -0.5):
        for sy in (+0.5, -0.5):
            for sz in (+0.5, -0.5):
                ops.append((0.5, sx, sy, sz))
    # 180 deg about the face diagonals
    for a, b in ((0, 1), (0, 2), (1, 2)):
        for s in (+_H, -_H):
            v = [0.0, 0.0, 0.0]
            v[a] = _H
            v[b] = s
            ops.append((0.0, *v))
    table = np.array(ops, dtype=np.float64)
    assert table.shape == (24, 4)
    return table


#: The 24 proper rotations of the m-3m point group, as unit quaternions.
CUBIC_SYMMETRY = _cubic_symmetry_quaternions()

# Rows (w, -x, -y, -z): dotting against a misorientation quaternion yields the
# scalar part of S*m without forming the product.
_SYM_SCALAR_ROWS = CUBIC_SYMMETRY * np.array([1.0, -1.0, -1.0, -1.0])

# contiguous copy handed to the kernel backends
SYM_SCALAR_ROWS = np.ascontiguousarray(_SYM_SCALAR_ROWS)


def qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of scalar-first quaternions (broadcasting)."""
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def qconj(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=np.float64, copy=True)
    out[..., 1:] = -out[..., 1:]
    return out


def quat_from_axis_angle(axis, angle_deg: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = np.radians(angle_deg) / 2.0
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def _check_unit(q: np.ndarray, what: str) -> None:
    norms = np.sqrt((np.asarray(q, dtype=np.float64) ** 2).sum(axis=-1))
    if not np.all(np.abs(norms - 1.0) <= _UNIT_TOL):
        raise NonUnitInput(f"{what}: quaternion norm drifts beyond {_UNIT_TOL}")


def misorientation_scalar_max(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """max over the 24 cubic operators of |scalar(S * qa^-1 * qb)|.

    This equals cos(theta/2) of the cubic disorientation.  Kept free of
    transcendentals so the compiled kernels can reproduce it bit for bit.
    """
    m = qmul(qconj(np.asarray(qa, dtype=np.float64)), np.asarray(qb, dtype=np.float64))
    best = np.abs(
        _SYM_SCALAR_ROWS[0, 0] * m[..., 0]
        + _SYM_SCALAR_ROWS[0, 1] * m[..., 1]
        + _SYM_SCALAR_ROWS[0, 2] * m[..., 2]
        + _SYM_SCALAR_ROWS[0, 3] * m[..., 3]
    )
    for k in range(1, 24):
        dot = np.abs(
            _SYM_SCALAR_ROWS[k, 0] * m[..., 0]
            + _SYM_SCALAR_ROWS[k, 1] * m[..., 1]
            + _SYM_SCALAR_ROWS[k, 2] * m[..., 2]
            + _SYM_SCALAR_ROWS[k, 3] * m[..., 3]
        )
        best = np.maximum(best, dot)
    return best


def scalar_max_to_angle_deg(scalar_max: np.ndarray) -> np.ndarray:
    return np.degrees(2.0 * np.arccos(np.clip(scalar_max, -1.0, 1.0)))


def angle_deg_to_scalar(angle_deg: float) -> float:
    """cos(theta/2) for a disorientation threshold given in degrees."""
    return float(np.cos(np.radians(angle_deg) / 2.0))


def disorientation_angles(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Batch cubic disorientation angles in degrees."""
    _check_unit(qa, "qa")
    _check_unit(qb, "qb")
    return scalar_max_to_angle_deg(misorientation_scalar_max(qa, qb))


@dataclass(frozen=True)
class Disorientation:
    angle: float  # degrees, within the cubic fundamental zone
    axis: np.ndarray  # unit 3-vector


def disorientation_cubic(qa, qb) -> Disorientation:
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    _check_unit(qa, "qa")
    _check_unit(qb, "qb")
    m = qmul(qconj(qa), qb)
    scalars = _SYM_SCALAR_ROWS @ m
    k = int(np.argmax(np.abs(scalars)))
    variant = qmul(CUBIC_SYMMETRY[k], m)
    if variant[0] < 0.0:
        variant = -variant
    angle = float(np.degrees(2.0 * np.arccos(np.clip(variant[0], -1.0, 1.0))))
    vec = variant[1:]
    norm = np.linalg.norm(vec)
    axis = vec / norm if norm > 1e-14 else np.array([0.0, 0.0, 1.0])
    return Disorientation(angle=angle, axis=axis)


def mean_orientation(qs) -> np.ndarray:
    """Quaternion mean after projecting all inputs to the representative
    (symmetry variant and sign) nearest the first element."""
    qs = np.asarray(qs, dtype=np.float64)
    if qs.size == 0:
        raise EmptyInput("mean_orientation needs at least one quaternion")
    qs = qs.reshape(-1, 4)
    _check_unit(qs, "qs")
    # variants[i, k] = qs[i] * S_k; choose per i the (k, sign) closest to qs[0]
    variants = qmul(qs[:, None, :], CUBIC_SYMMETRY[None, :, :])
    dots = variants @ qs[0]
    k_best = np.argmax(np.abs(dots), axis=1)
    rows = np.arange(len(qs))
    reps = variants[rows, k_best]
    reps = reps * np.sign(dots[rows, k_best])[:, None]
    scatter = reps.T @ reps
    evals, evecs = np.linalg.eigh(scatter)
    if len(qs) > 1 and (evals[-1] - evals[-2]) <= 1e-6 * max(evals[-1], 1e-300):
        warnings.warn(
            "orientation spread too uniform for a meaningful mean", LowConcentration
        )
    mean = evecs[:, -1]
    if mean[0] < 0.0:
        mean = -mean
    return mean


def _det3(F: np.ndarray) -> np.ndarray:
    a = F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
    b = F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
    c = F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    return a - b + c


def cauchy_from(F, P) -> np.ndarray:
    """Cauchy stress det(F)^-1 P F^T, symmetrized.

    Accepts single 3x3 tensors or batches (..., 3, 3).  A symmetrization
    defect above 1e-6 relative is reported through the module logger.
    """
    F = np.asarray(F, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    det = _det3(F)
    if np.any(det <= 0.0):
        raise SingularF("det(F) <= 0")
    raw = np.einsum("...ij,...kj->...ik", P, F) / det[..., None, None]
    sym = 0.5 * (raw + np.swapaxes(raw, -1, -2))
    skew = raw - sym
    scale = np.maximum(np.sqrt((sym**2).sum(axis=(-2, -1))), 1e-300)
    defect = np.sqrt((skew**2).sum(axis=(-2, -1))) / scale
    worst = float(np.max(defect)) if defect.size else 0.0
    if worst > 1e-6:
        log.warning("cauchy symmetrization defect %.3e exceeds 1e-6", worst)
    return sym


def von_mises_stress(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    tr = np.trace(sigma, axis1=-2, axis2=-1)
    dev = sigma - (tr / 3.0)[..., None, None] * np.eye(3)
    return np.sqrt(1.5 * (dev**2).sum(axis=(-2, -1)))


def von_mises_strain(F) -> np.ndarray:
    """Equivalent strain of the deviatoric logarithmic strain of the left stretch."""
    F = np.asarray(F, dtype=np.float64)
    if np.any(_det3(F) <= 0.0):
        raise SingularF("det(F) <= 0")
    B = np.einsum("...ij,...kj->...ik", F, F)
    lam2 = np.linalg.eigvalsh(B)
    e = 0.5 * np.log(lam2)
    dev = e - e.mean(axis=-1, keepdims=True)
    return np.sqrt((2.0 / 3.0) * (dev**2).sum(axis=-1))


@dataclass(frozen=True)
class RveAverages:
    F_bar: np.ndarray
    P_bar: np.ndarray
    sigma_vm_bar: float
    eps_vm_bar: float


def rve_averages(F: np.ndarray, P: np.ndarray) -> RveAverages:
    """Arithmetic per-point means (uniform point volumes)."""
    sigma = cauchy_from(F, P)
    return RveAverages(
        F_bar=F.mean(axis=0),
        P_bar=P.mean(axis=0),
        sigma_vm_bar=float(von_mises_stress(sigma).mean()),
        eps_vm_bar=float(von_mises_strain(F).mean()),
    )
