"""Exception hierarchy shared by every module."""


class CalError(Exception):
    """Base class for library errors."""


class InputError(CalError, ValueError):
    """Malformed or out-of-range input (bad item index, infeasible point...)."""


class CapacityError(CalError):
    """Instance too large for an exponential-time routine."""


class UnsupportedModeError(CalError, ValueError):
    """Oracle mode does not apply to the given valuation."""


class NonMRSError(CalError, ValueError):
    """A valuation outside the matroid-rank-sum class reached the solver."""


class DegenerateConditioningError(CalError, ValueError):
    """No positive curvature guarantee is available (mu == 0)."""


class ConvergenceError(CalError):
    """Iteration budget ran out before the duality gap was certified.

    The best iterate and its gap are kept on the exception so callers can
    still report a partial result.
    """

    def __init__(self, message, x=None, value=None, gap=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.value = value
        self.gap = gap
        self.iterations = iterations


class PrecisionExhaustedError(CalError):
    """Adaptive sampling hit its precision floor without leaving the uncertainty zone."""


class VerificationError(CalError, AssertionError):
    """A verified property was violated."""
