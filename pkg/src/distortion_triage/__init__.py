"""Distortion triage: classify the dominant image distortion from texture statistics and route to a classical restorer."""

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    FormatError,
    IoError,
    TriageError,
    UnsupportedError,
    VersionError,
)
from .image_core import Image, load_image, save_image

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "FormatError",
    "Image",
    "IoError",
    "TriageError",
    "UnsupportedError",
    "VersionError",
    "load_image",
    "save_image",
]
