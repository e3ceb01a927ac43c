"""Rain-streak removal by oriented suppression of a guided-filter detail layer."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import DomainError
from ..image_core import Image, guided_filter, to_grayscale


def structure_orientation(plane: np.ndarray, sigma: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
    """Local line orientation in degrees [0, 180) and its strength.

    Orientation is measured counter-clockwise from the horizontal with the
    y axis pointing up, so a vertical streak reads 90.  It is perpendicular
    to the dominant gradient of the smoothed structure tensor.
    """
    gx = ndimage.sobel(plane, axis=1, mode="mirror")
    gy = -ndimage.sobel(plane, axis=0, mode="mirror")
    jxx = ndimage.gaussian_filter(gx * gx, sigma, mode="mirror")
    jyy = ndimage.gaussian_filter(gy * gy, sigma, mode="mirror")
    jxy = ndimage.gaussian_filter(gx * gy, sigma, mode="mirror")
    grad_angle = 0.5 * np.degrees(np.arctan2(2.0 * jxy, jxx - jyy))
    strength = np.sqrt((jxx - jyy) ** 2 + 4.0 * jxy * jxy)
    return np.mod(grad_angle + 90.0, 180.0), strength


def dominant_angle(orientation: np.ndarray, weight: np.ndarray, lo: float = 60.0, hi: float = 120.0) -> float:
    """Peak of the magnitude-weighted orientation histogram restricted to [lo, hi]."""
    inside = (orientation >= lo) & (orientation <= hi)
    edges = np.arange(lo, hi + 1.0, 1.0)
    hist, _ = np.histogram(orientation[inside], bins=edges, weights=weight[inside])
    hist = ndimage.uniform_filter1d(hist, 5, mode="nearest")
    return float(edges[int(np.argmax(hist))] + 0.5)


def derain(
    image: Image,
    radius: int = 8,
    epsilon: float = 0.02,
    tolerance: float = 10.0,
    band: tuple[float, float] = (60.0, 120.0),
    max_coverage: float = 0.1,
) -> Image:
    """Remove bright detail aligned with the dominant near-vertical orientation.

    Streaks are sparse; when more than ``max_coverage`` of the pixels would be
    touched the aligned detail is taken to be scene texture and the input is
    returned unchanged.
    """
    if image.width < 32 or image.height < 32:
        raise DomainError("derain needs an image of at least 32x32")
    px = image.as_float() / 255.0
    gray = to_grayscale(image) / 255.0
    base = np.stack([guided_filter(gray, px[:, :, c], radius, epsilon) for c in range(image.channels)], axis=2)
    detail = px - base
    detail_luma = detail.mean(axis=2)
    orient, strength = structure_orientation(detail_luma)
    if not np.any(strength > 0):
        return image
    theta = dominant_angle(orient, strength, *band)
    gap = np.abs(orient - theta)
    gap = np.minimum(gap, 180.0 - gap)
    floor = 0.1 * float(strength.max())
    suppress = (gap <= tolerance) & (detail_luma > 0) & (strength > floor)
    if suppress.mean() > max_coverage:
        return image
    detail[suppress] = 0.0
    return Image.from_float(255.0 * (base + detail))
