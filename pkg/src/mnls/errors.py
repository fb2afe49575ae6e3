"""Exception hierarchy.

Everything raised on bad input derives from :class:`ValidationError` (CLI exit
code 2); numerical guard trips raise :class:`NumericalGuardError` (exit 3).
"""


class MnlsError(Exception):
    """Base class for all package errors."""


class ValidationError(MnlsError, ValueError):
    """A precondition of an operation is violated."""


class SpecMismatchError(ValidationError):
    """Two objects were built against different manifold specs."""


class AliasingRiskError(ValidationError):
    """The quadrature grid cannot integrate the requested products exactly."""


class EmptySupportError(ValidationError):
    """A spectral window (dyadic block, cluster) contains no modes."""


class UnsupportedManifoldError(ValidationError):
    """The operation is not available for this manifold kind."""


class OutsideHypothesisError(ValidationError):
    """Parameters fall outside the range where the estimate is stated."""


class ResourceLimitError(ValidationError):
    """Mode count or tensor size exceeds the configured cap."""


class CheckpointError(ValidationError):
    """Malformed, mismatched or wrong-version checkpoint file."""


class NumericalGuardError(MnlsError, RuntimeError):
    """A run produced non-finite values or drifted past its guard."""
