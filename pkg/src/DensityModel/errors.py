"""
Error Types
===========

Every failure raised by the density model, the shift estimators and the
simulation harness derives from ShiftEstimationError, so callers at the tool
layer can catch one type and turn it into a result dict.

Classes:
    - ShiftEstimationError: Root of the hierarchy
    - NumericalError: A computation could not produce a valid number
    - InvalidSample: Input observations violate a sample invariant
    - ConfigError: Experiment configuration is invalid
    - OutputError: Reading or writing an artifact failed
"""


class ShiftEstimationError(Exception):
    """Base class for all errors raised by this package."""


# ============================================
# NUMERICAL FAILURES
# ============================================

class NumericalError(ShiftEstimationError):
    """A numerical routine failed or its input makes the result undefined."""


class FewerThanTwoDistinctPoints(NumericalError):
    """The log-concave MLE needs at least two distinct observations."""


class NonConvergence(NumericalError):
    """The active-set iteration did not meet its tolerance."""

    def __init__(self, max_iterations: int, message: str = ""):
        self.max_iterations = max_iterations
        super().__init__(
            message or f"Active-set loop did not converge in {max_iterations} iterations"
        )


class NonPositiveBandwidth(NumericalError):
    """The closed-form bandwidth is not positive after round-off."""


class QuantileOutOfRange(NumericalError):
    """A quantile level outside the open interval (0, 1) was requested."""


class DegenerateInformation(NumericalError):
    """The estimated Fisher information is numerically zero."""


class EmptyTruncationWindow(NumericalError):
    """No X or no Y observation survives truncation."""


class OptimizerFailure(NumericalError):
    """A likelihood maximization did not converge."""


# ============================================
# INPUT, CONFIGURATION AND I/O FAILURES
# ============================================

class InvalidSample(ShiftEstimationError, ValueError):
    """Observations are too few, non-finite or otherwise malformed."""


class ConfigError(ShiftEstimationError):
    """An experiment configuration violates its invariants."""


class OutputError(ShiftEstimationError):
    """An artifact could not be read or written."""


class MalformedCsv(OutputError):
    """A summary CSV does not have the expected header or values."""
