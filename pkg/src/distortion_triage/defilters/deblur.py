"""Wiener deconvolution and grid-searched blind deblurring."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft, ndimage

from ..errors import DomainError
from ..image_core import Image
from ..synth import DEFOCUS_RADIUS, MOTION_LENGTH, disk_psf, motion_psf

logger = logging.getLogger(__name__)

CANDIDATE_LENGTHS = MOTION_LENGTH[1:]
CANDIDATE_ANGLES = tuple(range(0, 180, 15))
CANDIDATE_RADII = DEFOCUS_RADIUS[1:]


def _mirror_extend(plane: np.ndarray) -> np.ndarray:
    """Periodic even extension matching reflect-101 borders (period 2N-2 per axis)."""
    h, w = plane.shape
    if h > 2:
        plane = np.concatenate([plane, plane[-2:0:-1]], axis=0)
    if w > 2:
        plane = np.concatenate([plane, plane[:, -2:0:-1]], axis=1)
    return plane


def psf_otf(psf: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Transfer function of a centered PSF on a periodic grid of ``shape``."""
    kh, kw = psf.shape
    if kh > shape[0] or kw > shape[1]:
        raise DomainError("PSF larger than the image")
    grid = np.zeros(shape)
    grid[:kh, :kw] = psf
    grid = np.roll(grid, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return fft.rfft2(grid)


def wiener_deconvolve(plane: np.ndarray, psf: np.ndarray, k: float = 0.01, boundary: str = "mirror") -> np.ndarray:
    """Frequency-domain inverse ``conj(H) Y / (|H|^2 + k)``.

    ``boundary="mirror"`` works on the reflect-101 periodic extension, which
    inverts :func:`convolve2d` exactly for PSFs symmetric under both axis
    flips (disks, horizontal and vertical lines) and approximately otherwise.
    ``boundary="periodic"`` treats the plane as one period of a circular
    convolution.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if boundary == "mirror":
        ext = _mirror_extend(plane)
    elif boundary == "periodic":
        ext = plane
    else:
        raise DomainError(f"unknown boundary mode {boundary!r}")
    otf = psf_otf(psf, ext.shape)
    spec = fft.rfft2(ext)
    restored = fft.irfft2(np.conj(otf) * spec / (np.abs(otf) ** 2 + k), s=ext.shape)
    return restored[:h, :w]


def candidate_psfs():
    """(description, psf) pairs in a fixed order: motion lengths x angles, then disks."""
    out = []
    for length in CANDIDATE_LENGTHS:
        for angle in CANDIDATE_ANGLES:
            out.append((("motion", length, angle), motion_psf(length, angle)))
    for radius in CANDIDATE_RADII:
        out.append((("defocus", radius), disk_psf(radius)))
    return out


_CANDIDATES = None


def _candidates():
    global _CANDIDATES
    if _CANDIDATES is None:
        _CANDIDATES = candidate_psfs()
    return _CANDIDATES


def spectral_misfit(plane: np.ndarray, psfs, floor: float = 1e-3) -> np.ndarray:
    """How badly each PSF explains the plane's power spectrum.

    The log power spectrum is modeled as a power law in radial frequency plus
    ``log(|H|^2 + floor)``; the returned value is the mean squared residual of
    that fit.  Entry 0 is the no-blur hypothesis, entry ``i`` belongs to
    ``psfs[i - 1]``.
    """
    ext = _mirror_extend(np.asarray(plane, dtype=np.float64) - float(np.mean(plane)))
    power = ndimage.uniform_filter(np.abs(fft.rfft2(ext)) ** 2, 3)
    fy = fft.fftfreq(ext.shape[0])[:, None]
    fx = fft.rfftfreq(ext.shape[1])[None, :]
    radius = np.hypot(fy, fx)
    band = (radius > 0.02) & (radius < 0.45)
    design = np.stack([np.ones(int(band.sum())), np.log(radius[band])], axis=1)
    log_power = np.log(power[band] + 1e-9)

    def misfit(h2):
        resid = log_power - np.log(h2 + floor)
        coef = np.linalg.lstsq(design, resid, rcond=None)[0]
        return float(np.mean((resid - design @ coef) ** 2))

    out = [misfit(np.ones(int(band.sum())))]
    for psf in psfs:
        out.append(misfit(np.abs(psf_otf(psf, ext.shape)[band]) ** 2))
    return np.array(out)


@dataclass(frozen=True)
class DeblurResult:
    image: Image
    psf: tuple | None
    misfit: float
    input_misfit: float


def deblur_search(image: Image, k: float = 0.01, min_gain: float = 0.75) -> DeblurResult:
    """Pick the candidate PSF that best explains the luma spectrum and invert it.

    A candidate is used only when its misfit is below ``min_gain`` times the
    misfit of the no-blur hypothesis; otherwise the input comes back unchanged.
    """
    if image.width < 32 or image.height < 32:
        raise DomainError("deblur needs an image of at least 32x32")
    if not 0 < min_gain <= 1:
        raise DomainError("min_gain must lie in (0, 1]")
    px = image.as_float()
    luma = px.mean(axis=2)
    cands = _candidates()
    scores = spectral_misfit(luma, [psf for _, psf in cands])
    best = int(np.argmin(scores[1:])) + 1
    if not scores[best] < min_gain * scores[0]:
        return DeblurResult(image, None, float(scores[0]), float(scores[0]))
    desc, psf = cands[best - 1]
    chans = [wiener_deconvolve(px[:, :, c], psf, k) for c in range(image.channels)]
    logger.debug("deblur picked %s (misfit %.4f vs %.4f)", desc, scores[best], scores[0])
    return DeblurResult(Image.from_float(np.stack(chans, axis=2)), desc, float(scores[best]), float(scores[0]))


def deblur(image: Image, k: float = 0.01, min_gain: float = 0.75) -> Image:
    return deblur_search(image, k, min_gain).image
