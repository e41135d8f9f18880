"""Exception types raised across the package."""


class BlowupLabError(Exception):
    """Base class for all package errors."""


class DomainError(BlowupLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(BlowupLabError, ValueError):
    """An argument lies outside the range covered by tabulated data."""


class ConfigurationError(BlowupLabError, ValueError):
    """A spec or config is missing data required by the requested operation."""


class PreconditionError(BlowupLabError, ValueError):
    """A documented precondition of an operation does not hold."""


class HypothesisViolation(BlowupLabError):
    """The damping coefficient fails a structural hypothesis (e.g. positivity).

    Attributes
    ----------
    offending_t : list of float
        Sample times at which the violation was detected.
    """

    def __init__(self, message, offending_t=()):
        super().__init__(message)
        self.offending_t = [float(t) for t in offending_t]


class PastSingularityError(BlowupLabError, ValueError):
    """Evaluation requested at or beyond the singular time of a closed form."""


class AlignmentError(BlowupLabError, ValueError):
    """Two sampled trajectories are not defined on the same grid."""


class InfeasibleError(BlowupLabError):
    """No parameter value satisfies the requested set of conditions."""


class CoverageError(BlowupLabError, ValueError):
    """A sampling grid does not cover the support of the field being resampled."""


class UnsupportedDimensionError(BlowupLabError, ValueError):
    """The operation is only implemented for a subset of space dimensions."""
