"""Exception hierarchy shared by every delaykit module."""


class DelayKitError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(DelayKitError, ValueError):
    """Malformed input: non-finite entries, wrong shapes, bad parameters."""


class PreconditionError(DelayKitError, ValueError):
    """Input is well formed but violates a method's mathematical precondition."""


class TruncationError(DelayKitError, ArithmeticError):
    """A series could not be truncated within the allowed number of terms."""

    def __init__(self, message, achieved_bound=None):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class NumericRangeError(DelayKitError, ArithmeticError):
    """An intermediate quantity left the floating point range."""


class DivergedError(DelayKitError, ArithmeticError):
    """A time stepper blew up (usually a step size above the stability limit)."""


class UnsupportedOperationError(DelayKitError):
    """The requested route needs data that was not supplied."""
