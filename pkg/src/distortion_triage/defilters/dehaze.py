"""Dark channel prior dehazing with guided-filter transmission refinement."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import DomainError
from ..image_core import Image, guided_filter, to_grayscale


def dark_channel(pixels: np.ndarray, size: int = 15) -> np.ndarray:
    """Per-pixel channel minimum followed by a ``size`` x ``size`` minimum filter."""
    return ndimage.minimum_filter(pixels.min(axis=2), size=size, mode="mirror")


def atmospheric_light(pixels: np.ndarray, dark: np.ndarray, fraction: float = 0.001) -> np.ndarray:
    """Mean color of the brightest ``fraction`` of dark-channel pixels."""
    flat = dark.ravel()
    count = max(1, int(round(fraction * flat.size)))
    # stable ordering keeps ties deterministic
    idx = np.argsort(-flat, kind="stable")[:count]
    return pixels.reshape(-1, pixels.shape[2])[idx].mean(axis=0)


def estimate_transmission(pixels, airlight, omega=0.95, size=15):
    normalized = pixels / np.maximum(airlight, 1e-6)[None, None, :]
    return 1.0 - omega * dark_channel(normalized, size)


def looks_hazy(
    pixels: np.ndarray,
    airlight: np.ndarray,
    min_floor: float = 45.0,
    min_airlight: float = 180.0,
    min_mean_ratio: float = 0.7,
) -> bool:
    """Global evidence of an additive bright veil.

    A veil lifts even the darkest pixels (1st percentile of the channel
    minimum), comes from a bright airlight, and pulls the mean toward it.
    Mid-gray or gray-scale scenes satisfy the dark channel assumption badly
    and fail at least one of these tests.
    """
    floor = float(np.percentile(pixels.min(axis=2), 1))
    a = float(np.mean(airlight))
    return floor >= min_floor and a >= min_airlight and float(pixels.mean()) >= min_mean_ratio * a


def dehaze(
    image: Image,
    patch: int = 15,
    omega: float = 0.95,
    t_min: float = 0.1,
    radius: int = 40,
    epsilon: float = 1e-3,
    gate: bool = True,
) -> Image:
    """Dark channel prior dehazing; images without haze evidence pass through when ``gate`` is set."""
    if image.channels != 3:
        raise DomainError("dehaze needs an RGB image")
    if image.width < 32 or image.height < 32:
        raise DomainError("dehaze needs an image of at least 32x32")
    px = image.as_float()
    dark = dark_channel(px, patch)
    airlight = atmospheric_light(px, dark)
    if gate and not looks_hazy(px, airlight):
        return image
    t = estimate_transmission(px, airlight, omega, patch)
    t = guided_filter(to_grayscale(image) / 255.0, t, radius, epsilon)
    t = np.maximum(t, t_min)[:, :, None]
    return Image.from_float((px - airlight) / t + airlight)
