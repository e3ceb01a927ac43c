"""Luma contrast restoration: mid-gray stretch, blended CLAHE and a gated gamma."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError
from ..image_core import Image, to_grayscale


def _tile_bounds(n: int, tiles: int) -> np.ndarray:
    return np.linspace(0, n, tiles + 1).round().astype(int)


def clahe(luma: np.ndarray, tiles: tuple[int, int] = (8, 8), clip_limit: float = 2.0, bins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization of a [0, 255] plane.

    Each tile's histogram is clipped at ``clip_limit`` times its mean bin
    count, the excess is spread evenly over all bins, and the per-tile
    mappings are blended bilinearly between tile centers.
    """
    h, w = luma.shape
    ty, tx = min(tiles[0], h), min(tiles[1], w)
    levels = np.clip(np.rint(luma), 0, bins - 1).astype(np.int64)
    ys, xs = _tile_bounds(h, ty), _tile_bounds(w, tx)
    maps = np.empty((ty, tx, bins))
    for i in range(ty):
        for j in range(tx):
            tile = levels[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
            hist = np.bincount(tile.ravel(), minlength=bins).astype(np.float64)
            area = tile.size
            limit = max(clip_limit * area / bins, 1.0)
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit) + excess / bins
            cdf = np.cumsum(hist)
            maps[i, j] = cdf * (bins - 1) / area

    # bilinear blend between the four nearest tile centers
    cy = 0.5 * (ys[:-1] + ys[1:])
    cx = 0.5 * (xs[:-1] + xs[1:])
    pos_y = np.arange(h) + 0.5
    pos_x = np.arange(w) + 0.5
    iy = np.clip(np.searchsorted(cy, pos_y) - 1, 0, ty - 1)
    ix = np.clip(np.searchsorted(cx, pos_x) - 1, 0, tx - 1)
    iy1 = np.minimum(iy + 1, ty - 1)
    ix1 = np.minimum(ix + 1, tx - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fy = np.where(iy1 > iy, (pos_y - cy[iy]) / (cy[iy1] - cy[iy]), 0.0)
        fx = np.where(ix1 > ix, (pos_x - cx[ix]) / (cx[ix1] - cx[ix]), 0.0)
    fy = np.clip(fy, 0.0, 1.0)[:, None]
    fx = np.clip(fx, 0.0, 1.0)[None, :]
    iy_, iy1_ = iy[:, None], iy1[:, None]
    ix_, ix1_ = ix[None, :], ix1[None, :]
    v00 = maps[iy_, ix_, levels]
    v01 = maps[iy_, ix1_, levels]
    v10 = maps[iy1_, ix_, levels]
    v11 = maps[iy1_, ix1_, levels]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def mean_gamma(mean_luma: float, lo: float = 0.5, hi: float = 2.5) -> float:
    """Exponent that maps the mean luma to mid-gray, clamped to [lo, hi]."""
    m = min(max(mean_luma / 255.0, 1e-6), 1 - 1e-6)
    return min(max(math.log(0.5) / math.log(m), lo), hi)


def midgray_stretch(luma: np.ndarray, target: float = 60.0, max_gain: float = 1.6) -> np.ndarray:
    """Expand luma about 128 so its 98th-percentile deviation nears ``target``.

    The gain never drops below 1 and never exceeds ``max_gain``.
    """
    spread = float(np.percentile(np.abs(luma - 128.0), 98))
    gain = min(max(target / max(spread, 1e-6), 1.0), max_gain)
    return np.clip(128.0 + gain * (luma - 128.0), 0.0, 255.0)


def enhance_contrast(
    image: Image,
    tiles: tuple[int, int] = (8, 8),
    clip_limit: float = 2.0,
    gamma_range: tuple[float, float] = (0.5, 2.5),
    strength: float = 0.1,
    max_gain: float = 1.6,
    exposure_band: tuple[float, float] | None = None,
) -> Image:
    """Restore luma contrast, then rescale every channel by the luma gain.

    Luma is stretched about mid-gray, equalized by CLAHE and mixed back with
    the stretched plane at ``strength``.  The mean-centering gamma is off by
    default; pass ``exposure_band`` (fractions of 255) to apply it whenever
    the mean luma falls outside that band.
    """
    if image.width < 16 or image.height < 16:
        raise DomainError("enhance_contrast needs an image of at least 16x16")
    if not 0.0 <= strength <= 1.0:
        raise DomainError("strength must lie in [0, 1]")
    luma = to_grayscale(image)
    stretched = midgray_stretch(luma, max_gain=max_gain)
    eq = np.clip(clahe(stretched, tiles, clip_limit), 0, 255)
    mixed = strength * eq + (1.0 - strength) * stretched
    mean = float(mixed.mean())
    if exposure_band is None or exposure_band[0] * 255.0 <= mean <= exposure_band[1] * 255.0:
        out_luma = mixed
    else:
        out_luma = 255.0 * (mixed / 255.0) ** mean_gamma(mean, *gamma_range)
    px = image.as_float()
    if image.channels == 1:
        return Image.from_float(out_luma)
    # keep chroma ratios: scale every channel by the luma gain
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(luma > 0, out_luma / luma, 0.0)
    out = np.where((luma > 0)[:, :, None], px * gain[:, :, None], out_luma[:, :, None])
    return Image.from_float(out)
