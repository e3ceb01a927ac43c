"""Boundary smoothing for 8x8 block-transform artifacts."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..image_core import Image

BLOCK = 8


def _boundary_steps(plane: np.ndarray, axis: int) -> np.ndarray:
    """|a - b| across every block boundary perpendicular to ``axis``."""
    p = np.moveaxis(plane, axis, 0)
    cut = np.arange(BLOCK, p.shape[0], BLOCK)
    return np.abs(p[cut - 1] - p[cut])


def blockiness(image: Image) -> float:
    """Mean step across block boundaries minus the mean step between interior neighbors."""
    luma = image.as_float().mean(axis=2)
    boundary, interior = [], []
    for axis in (0, 1):
        p = np.moveaxis(luma, axis, 0)
        steps = np.abs(np.diff(p, axis=0))
        at_boundary = (np.arange(1, p.shape[0]) % BLOCK) == 0
        boundary.append(steps[at_boundary].ravel())
        interior.append(steps[~at_boundary].ravel())
    b = np.concatenate(boundary)
    i = np.concatenate(interior)
    return float(b.mean() - i.mean()) if b.size else 0.0


def _filter_axis(plane: np.ndarray, axis: int, limit: float, flatness: float) -> np.ndarray:
    out = np.moveaxis(plane.copy(), axis, 0)
    src = np.moveaxis(plane, axis, 0)
    cut = np.arange(BLOCK, src.shape[0] - 1, BLOCK)
    cut = cut[cut >= 2]
    a2, a, b, b2 = src[cut - 2], src[cut - 1], src[cut], src[cut + 1]
    # only a step between two locally flat sides is a block edge; texture is left alone
    smooth = (np.abs(a - b) < limit) & (np.abs(a2 - a) <= flatness) & (np.abs(b2 - b) <= flatness)
    out[cut - 1] = np.where(smooth, (a2 + 2.0 * a + b) / 4.0, a)
    out[cut] = np.where(smooth, (a + 2.0 * b + b2) / 4.0, b)
    return np.moveaxis(out, 0, axis)


def estimate_qp(plane: np.ndarray) -> float:
    """Median of the non-zero across-boundary steps.

    Flat regions quantize to identical blocks whose zero steps say nothing
    about the quantizer, so they are left out; 0 when every step is zero.
    """
    steps = np.concatenate([_boundary_steps(plane, 0).ravel(), _boundary_steps(plane, 1).ravel()])
    steps = steps[steps > 0]
    return float(np.median(steps)) if steps.size else 0.0


def deblock(image: Image, strength: float = 2.0) -> Image:
    """Smooth the pixel pair at each block boundary when its step is below ``strength * QP``.

    A boundary is filtered only if the step from each boundary pixel to its
    inner neighbor is at most QP.  QP comes from :func:`estimate_qp` per
    channel; block interiors are never modified.
    """
    if image.width < 32 or image.height < 32:
        raise DomainError("deblock needs an image of at least 32x32")
    px = image.as_float()
    out = np.empty_like(px)
    for c in range(image.channels):
        plane = px[:, :, c]
        qp = estimate_qp(plane)
        plane = _filter_axis(plane, 0, strength * qp, qp)
        plane = _filter_axis(plane, 1, strength * qp, qp)
        out[:, :, c] = plane
    return Image.from_float(out)
