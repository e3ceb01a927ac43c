"""Noise level estimation and non-local means."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..errors import DomainError
from ..image_core import Image

_LAPLACIAN_DIFF = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])


def estimate_noise_sigma(plane: np.ndarray) -> float:
    """Immerkaer's fast estimate of the standard deviation of additive white noise."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if h < 3 or w < 3:
        raise DomainError("noise estimation needs at least 3x3 samples")
    response = ndimage.correlate(plane, _LAPLACIAN_DIFF, mode="mirror")[1:-1, 1:-1]
    return math.sqrt(math.pi / 2.0) * float(np.abs(response).sum()) / (6.0 * (w - 2) * (h - 2))


def estimate_image_sigma(image: Image) -> float:
    """Mean of the per-channel estimates."""
    px = image.as_float()
    return float(np.mean([estimate_noise_sigma(px[:, :, c]) for c in range(image.channels)]))


def nl_means(pixels: np.ndarray, sigma: float, patch: int = 7, window: int = 21, h_factor: float = 0.8) -> np.ndarray:
    """Pixelwise non-local means over all channels of an (H, W, C) float array.

    Patch distances are mean squared differences over the patch and channels;
    the expected noise contribution ``2 sigma^2`` is subtracted before
    weighting with ``exp(-d / h^2)``, ``h = h_factor * sigma``.
    """
    if sigma <= 0:
        return pixels.copy()
    pr, sr = patch // 2, window // 2
    hh, ww, _ = pixels.shape
    pad = sr
    padded = np.pad(pixels, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    h2 = (h_factor * sigma) ** 2
    offset = 2.0 * sigma * sigma
    acc = np.zeros_like(pixels)
    wsum = np.zeros((hh, ww))
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            shifted = padded[pad + dy:pad + dy + hh, pad + dx:pad + dx + ww]
            d2 = ((pixels - shifted) ** 2).mean(axis=2)
            d2 = ndimage.uniform_filter(d2, size=2 * pr + 1, mode="mirror")
            wgt = np.exp(-np.maximum(d2 - offset, 0.0) / h2)
            acc += wgt[:, :, None] * shifted
            wsum += wgt
    return acc / wsum[:, :, None]


def denoise(image: Image, patch: int = 7, window: int = 21, h_factor: float = 0.8) -> Image:
    if image.width < 16 or image.height < 16:
        raise DomainError("denoise needs an image of at least 16x16")
    sigma = estimate_image_sigma(image)
    if sigma <= 0:
        return image
    return Image.from_float(nl_means(image.as_float(), sigma, patch, window, h_factor))
