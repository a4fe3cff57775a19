"""Exception types shared across the package."""


class EgrnetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EgrnetError):
    """Shapes or lengths do not match what an operation requires."""


class DegenerateSignalError(EgrnetError):
    """Signal has zero variance or zero power where that is not allowed."""


class FormatError(EgrnetError):
    """A file on disk does not match the expected format."""


class ConfigError(EgrnetError):
    """An invalid configuration value."""
