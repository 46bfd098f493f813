"""Strain-step container format, config parsing, and the synthetic generator.

The on-disk format is an owned little-endian binary container: magic
``GMAP0001``, then u32 Nx, Ny, Nz, f64 rve_edge, f64 strain_label, u32 record
flags (must be zero), then N records of 208 bytes each (position, F, P, q,
texture id, padding).  Files either round-trip bit-exactly or fail loudly.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import (
    IoFailure,
    MalformedHeader,
    NonPositiveJacobian,
    NonUnitQuaternion,
    SpecViolation,
    TruncatedPayload,
)
from .tensor_kernels import qmul, von_mises_strain

log = logging.getLogger(__name__)

MAGIC = b"GMAP0001"
_HEADER = struct.Struct("<8s3IddI")
HEADER_SIZE = _HEADER.size  # 40

RECORD_DTYPE = np.dtype(
    [
        ("position", "<f8", (3,)),
        ("def_grad", "<f8", (3, 3)),
        ("piola_stress", "<f8", (3, 3)),
        ("orientation", "<f8", (4,)),
        ("texture_id", "<u4"),
        ("_pad", "V4"),
    ]
)
RECORD_SIZE = RECORD_DTYPE.itemsize  # 208

# quaternion norm handling on read: below the keep threshold the stored bits
# are preserved (bit-exact round trips), between the two the quaternion is
# renormalized, above the error threshold the file is rejected
_Q_KEEP = 1e-9
_Q_FAIL = 1e-6


@dataclass(frozen=True)
class MaterialPoint:
    """One material point; arrays are views into the parent dataset."""

    position: np.ndarray
    def_grad: np.ndarray
    piola_stress: np.ndarray
    orientation: np.ndarray
    texture_id: int


@dataclass
class StrainStepDataset:
    positions: np.ndarray      # (N, 3)
    def_grad: np.ndarray       # (N, 3, 3)
    piola_stress: np.ndarray   # (N, 3, 3)
    orientation: np.ndarray    # (N, 4) scalar-first unit quaternions
    texture_id: np.ndarray     # (N,) uint32
    grid_dims: tuple[int, int, int]
    rve_edge: float
    strain_label: float

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def spacing(self) -> float:
        return self.rve_edge / self.grid_dims[0]

    def point(self, i: int) -> MaterialPoint:
        return MaterialPoint(
            self.positions[i],
            self.def_grad[i],
            self.piola_stress[i],
            self.orientation[i],
            int(self.texture_id[i]),
        )

    def validate(self) -> None:
        nx, ny, nz = self.grid_dims
        if nx * ny * nz != self.n_points:
            raise SpecViolation(
                f"grid {nx}x{ny}x{nz} does not match {self.n_points} points"
            )
        if not (self.rve_edge > 0.0 and np.isfinite(self.rve_edge)):
            raise SpecViolation(f"rve_edge must be finite positive, got {self.rve_edge}")
        drift = np.abs(np.sqrt(np.einsum("ij,ij->i", self.orientation,
                                         self.orientation)) - 1.0)
        worst = float(drift.max()) if drift.size else 0.0
        if worst > _Q_FAIL:
            raise NonUnitQuaternion(f"max quaternion norm drift {worst:.3e}")
        det = np.linalg.det(self.def_grad)
        if (det <= 0.0).any():
            bad = int(np.argmax(det <= 0.0))
            raise NonPositiveJacobian(f"det(F) <= 0 at point {bad}: {det[bad]:.3e}")


def read_strain_step(path) -> StrainStepDataset:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < HEADER_SIZE:
        raise MalformedHeader(f"{path}: {len(raw)} bytes is shorter than the header")
    magic, nx, ny, nz, rve_edge, strain_label, flags = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if flags != 0:
        raise MalformedHeader(f"{path}: unsupported record flags {flags:#x}")
    if min(nx, ny, nz) == 0:
        raise MalformedHeader(f"{path}: zero grid dimension {nx}x{ny}x{nz}")
    if not (np.isfinite(rve_edge) and rve_edge > 0.0 and np.isfinite(strain_label)):
        raise MalformedHeader(f"{path}: non-finite header reals")
    n = nx * ny * nz
    expected = HEADER_SIZE + RECORD_SIZE * n
    if len(raw) < expected:
        raise TruncatedPayload(
            f"{path}: expected {expected} bytes for {n} records, got {len(raw)}"
        )
    if len(raw) > expected:
        raise MalformedHeader(f"{path}: {len(raw) - expected} trailing bytes")
    rec = np.frombuffer(raw, RECORD_DTYPE, count=n, offset=HEADER_SIZE)
    q = rec["orientation"].copy()
    norm = np.sqrt(np.einsum("ij,ij->i", q, q))
    drift = np.abs(norm - 1.0)
    worst = float(drift.max()) if n else 0.0
    if worst > _Q_FAIL:
        raise NonUnitQuaternion(f"{path}: max quaternion norm drift {worst:.3e}")
    fix = drift > _Q_KEEP
    if fix.any():
        q[fix] /= norm[fix, None]
    ds = StrainStepDataset(
        positions=rec["position"].astype(np.float64),
        def_grad=rec["def_grad"].astype(np.float64),
        piola_stress=rec["piola_stress"].astype(np.float64),
        orientation=q,
        texture_id=rec["texture_id"].copy(),
        grid_dims=(int(nx), int(ny), int(nz)),
        rve_edge=float(rve_edge),
        strain_label=float(strain_label),
    )
    det = np.linalg.det(ds.def_grad)
    if (det <= 0.0).any():
        bad = int(np.argmax(det <= 0.0))
        raise NonPositiveJacobian(f"{path}: det(F) <= 0 at record {bad}")
    return ds


def write_strain_step(dataset: StrainStepDataset, path) -> None:
    dataset.validate()
    path = Path(path)
    n = dataset.n_points
    rec = np.zeros(n, RECORD_DTYPE)
    rec["position"] = dataset.positions
    rec["def_grad"] = dataset.def_grad
    rec["piola_stress"] = dataset.piola_stress
    rec["orientation"] = dataset.orientation
    rec["texture_id"] = dataset.texture_id
    nx, ny, nz = dataset.grid_dims
    header = _HEADER.pack(MAGIC, nx, ny, nz, dataset.rve_edge,
                          dataset.strain_label, 0)
    tmp = path.with_name(f"{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(rec.tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        try:
            tmp.unlink(missing_ok=True)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class SyntheticSpec:
    grid_dims: tuple[int, int, int]
    n_grains: int
    seed: int
    affine_F: np.ndarray | None = None
    planted_gradient: tuple[float, float] | None = None  # (slope deg/spacing, max deg)
    planted_stress: tuple[float, float] | None = None    # (interior_mean, boundary_delta)


def _uniform_quaternions(rng: np.random.Generator, count: int) -> np.ndarray:
    """Shoemake's subgroup algorithm: uniform on SO(3) from three variates."""
    u = rng.random((count, 3))
    r1 = np.sqrt(1.0 - u[:, 0])
    r2 = np.sqrt(u[:, 0])
    t1 = 2.0 * np.pi * u[:, 1]
    t2 = 2.0 * np.pi * u[:, 2]
    q = np.empty((count, 4))
    q[:, 0] = np.cos(t2) * r2
    q[:, 1] = np.sin(t1) * r1
    q[:, 2] = np.cos(t1) * r1
    q[:, 3] = np.sin(t2) * r2
    return q


def true_boundary_distance(label_grid: np.ndarray) -> np.ndarray:
    """Per-point distance to the nearest differently-labeled lattice point.

    Periodic: each label mask is wrap-padded by a full period per axis, so
    the Euclidean distance transform sees every periodic image and the result
    is the exact minimum-image distance.
    """
    dims = label_grid.shape
    out = np.zeros(dims, np.float64)
    pad = [(d, d) for d in dims]
    for g in np.unique(label_grid):
        mask = label_grid == g
        big = np.pad(mask, pad, mode="wrap")
        edt = distance_transform_edt(big)
        core = edt[dims[0]:2 * dims[0], dims[1]:2 * dims[1], dims[2]:2 * dims[2]]
        out[mask] = core[mask]
    return out


def generate_synthetic(spec: SyntheticSpec) -> StrainStepDataset:
    """Poisson-Voronoi polycrystal on a cubic lattice with optional planted fields.

    Points sit on the integer lattice (spacing 1, rve_edge = Nx).  Grain
    labels are the periodic nearest seed site.  With ``planted_gradient``
    each point is rotated away from its grain orientation by
    min(slope * d_true, max_angle) about a per-grain axis with a per-point
    random sense, so the disorientation profile is linear in the true
    boundary distance while the grain mean orientation stays at the
    reference.  With ``planted_stress`` the Cauchy stress is uniaxial with
    sigma_33 = interior_mean + boundary_delta * exp(-(d_true - 1) / 2): the
    first boundary layer (d_true = 1 on a lattice) carries the full delta.
    ``strain_label`` is the von Mises strain of ``affine_F`` (0 if unset).
    """
    nx, ny, nz = spec.grid_dims
    n = nx * ny * nz
    if not 1 <= spec.n_grains <= n:
        raise SpecViolation(f"n_grains {spec.n_grains} outside [1, {n}]")
    if spec.planted_gradient is not None:
        slope, max_angle = spec.planted_gradient
        if not (slope >= 0.0 and 0.0 < max_angle < 62.8):
            raise SpecViolation(
                f"planted gradient ({slope}, {max_angle}) outside valid range"
            )
    rng = np.random.default_rng(spec.seed)
    ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")
    pos = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1).astype(np.float64)
    seed_ids = rng.choice(n, size=spec.n_grains, replace=False)
    seed_pos = pos[seed_ids]
    period = np.array([nx, ny, nz], np.float64)
    labels = np.empty(n, np.int64)
    chunk = 1 << 15
    for s in range(0, n, chunk):
        d = pos[s:s + chunk, None, :] - seed_pos[None, :, :]
        d -= period * np.round(d / period)
        labels[s:s + chunk] = np.argmin((d * d).sum(axis=2), axis=1)
    grain_q = _uniform_quaternions(rng, spec.n_grains)
    grain_q /= np.sqrt(np.einsum("ij,ij->i", grain_q, grain_q))[:, None]
    q = grain_q[labels]
    F = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    sigma = None
    d_true = None
    if spec.planted_gradient is not None or spec.planted_stress is not None:
        d_true = true_boundary_distance(labels.reshape(nx, ny, nz)).ravel()
    if spec.planted_gradient is not None:
        slope, max_angle = spec.planted_gradient
        axes = rng.normal(size=(spec.n_grains, 3))
        axes /= np.sqrt(np.einsum("ij,ij->i", axes, axes))[:, None]
        sense = rng.choice(np.array([-1.0, 1.0]), size=n)
        angle = np.minimum(slope * d_true, max_angle) * sense
        half = np.radians(angle) * 0.5
        rot = np.empty((n, 4))
        rot[:, 0] = np.cos(half)
        rot[:, 1:] = np.sin(half)[:, None] * axes[labels]
        q = qmul(q, rot)
        q /= np.sqrt(np.einsum("ij,ij->i", q, q))[:, None]
    if spec.planted_stress is not None:
        mean, delta = spec.planted_stress
        sigma = np.zeros((n, 3, 3))
        sigma[:, 2, 2] = mean + delta * np.exp(-(d_true - 1.0) / 2.0)
    if spec.affine_F is not None:
        A = np.asarray(spec.affine_F, np.float64).reshape(3, 3)
        if np.linalg.det(A) <= 0.0:
            raise SpecViolation("affine_F must have positive determinant")
        pos = pos @ A.T
        F = np.broadcast_to(A, (n, 3, 3)).copy()
    if sigma is not None:
        detF = np.linalg.det(F)
        Finv_t = np.linalg.inv(F).transpose(0, 2, 1)
        P = detF[:, None, None] * np.einsum("nij,njk->nik", sigma, Finv_t)
    else:
        P = np.zeros((n, 3, 3))
    strain_label = float(von_mises_strain(F[0])) if spec.affine_F is not None else 0.0
    ds = StrainStepDataset(
        positions=pos,
        def_grad=F,
        piola_stress=P,
        orientation=q,
        texture_id=labels.astype(np.uint32),
        grid_dims=(nx, ny, nz),
        rve_edge=float(nx),
        strain_label=strain_label,
    )
    ds.validate()
    return ds


def parse_config(path) -> dict[str, str]:
    """Plain ``key = value`` config text; # starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecViolation(f"{path}:{ln}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out
