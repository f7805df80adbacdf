"""Exception types raised by the localization library."""


class EstimationError(Exception):
    """Base class for data-dependent failures of metrics and estimators."""


class DegenerateGeometryError(EstimationError):
    """Sensor/target geometry does not determine the quantity being computed.

    Raised for coplanar anchor sets, targets coincident with an anchor, and
    normal matrices whose condition number exceeds the singularity threshold.
    """


class GimbalLockError(EstimationError):
    """Euler angle extraction attempted at pitch = +/- pi/2.

    The yaw/roll split is undefined there; callers must handle or avoid it.
    """


class InconsistentInputError(EstimationError):
    """A matrix violates the structural assumptions of the requested operation,
    e.g. a Gram matrix that is indefinite beyond tolerance during realization.
    """


class AlignmentUnderdeterminedError(EstimationError):
    """Point-set alignment has fewer than two independent directions."""


class MeasurementFormatError(Exception):
    """A measurement file is malformed; the message names the offending line."""
