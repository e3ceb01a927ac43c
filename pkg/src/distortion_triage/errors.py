"""Exception hierarchy shared by every module."""


class TriageError(Exception):
    """Base class for all package errors."""


class DomainError(TriageError, ValueError):
    """An argument is outside the domain an operation accepts."""


class DimensionError(TriageError, ValueError):
    """Array or image shapes do not agree."""


class FormatError(TriageError, ValueError):
    """A file is corrupt or not in a supported format."""


class UnsupportedError(FormatError):
    """A well-formed file uses a feature we do not handle (e.g. 16-bit samples)."""


class VersionError(FormatError):
    """A serialized model carries an unknown version tag."""


class ConfigError(TriageError, ValueError):
    """Invalid hyperparameters or pipeline configuration."""


class IoError(TriageError, OSError):
    """A file could not be read or written."""
