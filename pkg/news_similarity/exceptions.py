"""
Exception hierarchy for the news similarity system.
"""


class NewsSimilarityError(Exception):
    """Base class for all errors raised by the package."""


class DataError(NewsSimilarityError, ValueError):
    """Input data violates the expected format or invariants."""


class InsufficientOriginError(DataError):
    """A translate-train plan row asks for more origin samples than are available."""


class UnsupportedLanguagePairError(NewsSimilarityError, ValueError):
    """A translator cannot handle the requested direction."""


class ConfigError(NewsSimilarityError, ValueError):
    """A configuration object is invalid."""


class NumericError(NewsSimilarityError, ArithmeticError):
    """A loss or prediction became non-finite."""


class PearsonError(NewsSimilarityError, ValueError):
    """Pearson's correlation is undefined for the given inputs."""


class LengthMismatchError(PearsonError):
    """The two series have different lengths."""


class TooFewSamplesError(PearsonError):
    """Fewer than two samples were given."""


class ZeroVarianceError(PearsonError):
    """One of the series is constant."""


class NonFiniteInputError(PearsonError):
    """One of the series holds NaN or infinity."""
