"""Exception hierarchy shared by all epnoise modules."""


class EpNoiseError(Exception):
    """Base class for every error raised by epnoise."""


class NumericalError(EpNoiseError):
    """A numerical routine could not produce a trustworthy result."""


class NonSquareError(EpNoiseError, ValueError):
    pass


class NonConvergenceError(NumericalError):
    """Eigensolver failed; ``partial`` holds whatever was computed (may be None)."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SingularMatrixError(NumericalError):
    """Linear system has a pivot below threshold.

    For a Liouvillian this means a (near-)zero eigenvalue, i.e. no unique
    stationary state.
    """


class AmbiguousClusteringError(NumericalError):
    pass


class DivergedError(NumericalError):
    """Stochastic trajectory exceeded the overflow guard."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class EmptyWindowError(EpNoiseError, ValueError):
    pass


class BelowNoiseFloorError(NumericalError):
    pass


class MixedSpectrumError(NumericalError):
    pass


class ConfigError(EpNoiseError):
    """Base for configuration problems (exit status 1)."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError, ValueError):
    """Invalid value; ``field`` names the offending entry, ``line`` its location."""

    def __init__(self, message, field=None, line=None):
        loc = f" (line {line})" if line is not None else ""
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}{loc}")
        self.field = field
        self.line = line
