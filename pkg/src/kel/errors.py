"""Exception types shared across the package."""


class KelError(Exception):
    """Base class for every error raised by this package."""


class NotStochastic(KelError):
    """Matrix rows are not probability distributions."""


class NonUniqueStationary(KelError):
    """The kernel has more than one recurrent class."""


class NotInvariant(KelError):
    """The supplied measure is not preserved by the kernel."""


class NotMeasurePreserving(KelError):
    """A point map does not push the measure onto itself."""


class NotStabilized(KelError):
    """Deterministic-partition iteration hit its cap before settling.

    The partition computed so far is attached for inspection; it may be
    finer than the true answer.
    """

    def __init__(self, message, partition=None):
        super().__init__(message)
        self.partition = partition


class WindowTooLarge(KelError):
    """Requested window would materialise too large a dense table."""


class UnknownBoundary(KelError):
    """No boundary classification is available for this input."""


class IncompatibleFactors(KelError):
    """The rotation factor does not sit inside the non-random factor."""


class UnsupportedProfile(KelError):
    """Noise profile outside the decidable classification families."""


class NotCommuting(KelError):
    """The two point maps do not commute."""


class ConfigError(KelError):
    """Experiment configuration is missing or malformed."""


class InputError(KelError):
    """An input file is missing or malformed."""


class InsufficientDataWarning(UserWarning):
    """An estimate was produced from fewer samples than recommended."""
