"""Exception hierarchy shared by all modules."""


class PcmdlError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(PcmdlError, ValueError):
    pass


class NotPositiveDefinite(PcmdlError, ValueError):
    pass


class NoConvergence(PcmdlError, RuntimeError):
    pass


class NonFiniteValue(PcmdlError, FloatingPointError):
    pass


class UnsupportedArchitecture(PcmdlError, ValueError):
    pass


class SingularSystem(PcmdlError, ValueError):
    pass


class InvalidDelta(PcmdlError, ValueError):
    pass


class InvalidConfig(PcmdlError, ValueError):
    pass


class IoFailure(PcmdlError, OSError):
    pass


# CLI exit codes keyed by failure class
NUMERICAL_ERRORS = (NotPositiveDefinite, NoConvergence, NonFiniteValue, SingularSystem)
