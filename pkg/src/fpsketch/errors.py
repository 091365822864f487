"""Exception hierarchy shared by every module of the package."""


class FpSketchError(Exception):
    """Base class for all package errors."""


class ConfigError(FpSketchError, ValueError):
    """A parameter set violates a construction constraint."""


class UsageError(FpSketchError, ValueError):
    """A call received arguments outside its contract (index range, sample count, ...)."""


class BoundNotApplicable(FpSketchError):
    """The premises of an analytic bound do not hold for the supplied parameters."""


class CounterOverflow(FpSketchError, OverflowError):
    """A fixed-point counter would leave the signed 64-bit range."""
