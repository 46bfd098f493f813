"""Exception and warning types shared across the package."""

from __future__ import annotations


class GrainmapError(Exception):
    """Base class for all package-specific errors."""


class IoFailure(GrainmapError):
    """Underlying OS-level read/write failure."""


class MalformedHeader(GrainmapError):
    """Strain-step file header is not understood (magic, dims, flags, trailing bytes)."""


class TruncatedPayload(GrainmapError):
    """Strain-step file ends mid-record."""


class NonUnitQuaternion(GrainmapError):
    """Stored orientation drifts from unit norm beyond the repairable bound."""


class NonPositiveJacobian(GrainmapError):
    """A deformation gradient with det(F) <= 0 was read or supplied."""


class SpecViolation(GrainmapError):
    """A synthetic-dataset request is internally inconsistent."""


class SingularF(GrainmapError):
    """Tensor kernel received a deformation gradient with non-positive determinant."""


class NonUnitInput(GrainmapError):
    """Quaternion argument is not unit within 1e-9."""


class EmptyInput(GrainmapError):
    """An operation that needs at least one element received none."""


class RadiusExceedsBucket(GrainmapError):
    """Range query radius is larger than the index bucket width."""


class GrainWrapsDomain(GrainmapError):
    """A grain percolates through the periodic domain; no single image exists."""


class GuardExhausted(GrainmapError):
    """Voronoi guard zone still in wall contact after the retry budget."""


class MissingPartition(GrainmapError):
    """Disorientation output requested without a grain reconstruction."""


class EmptyBin(GrainmapError):
    """Quantile of an empty value set; emitted as a missing value downstream."""


class LowConcentration(UserWarning):
    """Mean orientation is ill-defined: input orientations are spread too uniformly."""
