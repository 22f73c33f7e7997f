"""Exception hierarchy shared by every stage."""


class BandexError(Exception):
    """Base class for all toolkit errors."""


class PreconditionError(BandexError, ValueError):
    """An argument violates an operation's precondition."""


class FormatError(BandexError):
    """Malformed file contents (bad RIFF header, bad table line, ...)."""


class UnsupportedFormatError(FormatError):
    """Well-formed file in a format we do not handle (stereo, non-PCM...)."""


class ConfigurationError(BandexError):
    """Missing or corrupt configuration / data file."""


class NumericalError(BandexError):
    """A linear system or iteration could not be solved reliably."""


class InstabilityError(NumericalError):
    """An LPC solve or synthesis filter went unstable."""


class TrainingError(BandexError):
    """Training could not produce a usable model."""


class LoadError(BandexError):
    """A model bundle could not be loaded."""
