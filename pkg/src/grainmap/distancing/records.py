"""Distance records and state attachment.

Records are columnar: one distance (in units of the initial point spacing)
and one owner point per record.  ``attach_state`` wires the source dataset
(and optionally a partition with grain mean orientations) into the record
set; the per-record Cauchy components, von Mises stress, and disorientation
to the grain mean are computed chunk-wise on demand so a large record set
never holds all derived columns at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MissingPartition, SpecViolation
from ..tensor_kernels import (
    cauchy_from,
    misorientation_scalar_max,
    scalar_max_to_angle_deg,
    von_mises_stress,
)

SIGMA_COMPONENTS = ("sigma11", "sigma22", "sigma33", "sigma23", "sigma13", "sigma12")
SCALAR_NAMES = SIGMA_COMPONENTS + ("sigma_vm", "disorientation")

_SIGMA_IJ = {
    "sigma11": (0, 0), "sigma22": (1, 1), "sigma33": (2, 2),
    "sigma23": (1, 2), "sigma13": (0, 2), "sigma12": (0, 1),
}

_CHUNK = 1 << 16


@dataclass
class DistanceRecords:
    method: str
    distance: np.ndarray          # (M,) float64, spacing units
    owner: np.ndarray             # (M,) int64 original point index
    dataset: object = None        # StrainStepDataset once attached
    partition: object = None      # GrainPartition or None
    grain_means: np.ndarray | None = None  # (G, 4)

    @property
    def n_records(self) -> int:
        return self.distance.shape[0]

    def scalar_names(self) -> tuple:
        if self.partition is not None:
            return SCALAR_NAMES
        return SIGMA_COMPONENTS + ("sigma_vm",)

    def scalar_values(self, name: str) -> np.ndarray:
        """Per-record values of one tracked scalar, computed chunk-wise."""
        if self.dataset is None:
            raise SpecViolation("records have no attached state")
        if name == "disorientation":
            if self.partition is None or self.grain_means is None:
                raise MissingPartition(
                    "disorientation requested without a reconstruction"
                )
            out = np.empty(self.n_records)
            q = self.dataset.orientation
            labels = self.partition.labels
            for s in range(0, self.n_records, _CHUNK):
                own = self.owner[s:s + _CHUNK]
                md = misorientation_scalar_max(q[own],
                                               self.grain_means[labels[own]])
                out[s:s + _CHUNK] = scalar_max_to_angle_deg(md)
            return out
        if name == "sigma_vm":
            out = np.empty(self.n_records)
            for s in range(0, self.n_records, _CHUNK):
                out[s:s + _CHUNK] = von_mises_stress(self._sigma_chunk(s))
            return out
        if name in _SIGMA_IJ:
            i, j = _SIGMA_IJ[name]
            out = np.empty(self.n_records)
            for s in range(0, self.n_records, _CHUNK):
                out[s:s + _CHUNK] = self._sigma_chunk(s)[:, i, j]
            return out
        raise SpecViolation(f"unknown scalar {name!r}")

    def _sigma_chunk(self, s: int) -> np.ndarray:
        own = self.owner[s:s + _CHUNK]
        return cauchy_from(self.dataset.def_grad[own],
                           self.dataset.piola_stress[own])


def attach_state(records: DistanceRecords, dataset, partition=None,
                 grain_means=None) -> DistanceRecords:
    """Attach per-record state sources; disorientation needs a partition."""
    if (partition is None) != (grain_means is None):
        raise MissingPartition("partition and grain means must come together")
    records.dataset = dataset
    records.partition = partition
    records.grain_means = grain_means
    return records
