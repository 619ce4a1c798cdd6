"""Exception hierarchy for nrmi_mix."""


class NrmiError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParametersError(NrmiError, ValueError):
    """A process, kernel or base-measure parameter violates its constraints."""


class DivergentTailError(InvalidParametersError):
    """The tail mass N(v) is not finite (untilted gamma intensity)."""


class DomainError(NrmiError, ValueError):
    """A kernel parameter or datum lies outside the kernel support."""


class InversionError(NrmiError, ArithmeticError):
    """Numerical inversion of the tail mass failed."""

    def __init__(self, message, xi=None, params=None):
        super().__init__(message)
        self.xi = xi
        self.params = params


class TruncationCapError(NrmiError, RuntimeError):
    """The Ferguson-Klass series exceeded its hard length cap."""


class CalibrationRangeError(NrmiError, ValueError):
    """The calibration target cannot be reached inside the parameter bounds."""


class ConfigError(NrmiError, ValueError):
    """Invalid run configuration."""


class DataError(NrmiError, ValueError):
    """Input data could not be parsed or violates the kernel support."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class SamplerError(NrmiError, RuntimeError):
    """A numerical failure inside the Gibbs sampler."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateBandwidthError(DataError):
    """The data have zero sample variance, so the KDE bandwidth vanishes."""
