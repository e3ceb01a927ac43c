"""Classical restoration operators, one per distortion class, and the router."""

from __future__ import annotations

from typing import Callable

from ..image_core import Image
from ..synth import DistortionClass
from .contrast import enhance_contrast
from .deblock import deblock
from .deblur import deblur
from .dehaze import dehaze
from .denoise import denoise
from .derain import derain

DEFILTERS: dict[DistortionClass, Callable[..., Image]] = {
    DistortionClass.COMPRESSION: deblock,
    DistortionClass.NOISE: denoise,
    DistortionClass.CONTRAST_ILLUMINATION: enhance_contrast,
    DistortionClass.RAIN: derain,
    DistortionClass.HAZE: dehaze,
    DistortionClass.BLUR: deblur,
}


def defilter_name(cls: DistortionClass) -> str:
    return DEFILTERS[DistortionClass(cls)].__name__


def restore(image: Image, cls: DistortionClass, params: dict | None = None) -> Image:
    """Run the defilter registered for ``cls``; ``params`` are passed as keyword overrides."""
    return DEFILTERS[DistortionClass(cls)](image, **(params or {}))


__all__ = [
    "DEFILTERS",
    "deblock",
    "deblur",
    "defilter_name",
    "dehaze",
    "denoise",
    "derain",
    "enhance_contrast",
    "restore",
]
