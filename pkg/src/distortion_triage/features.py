"""GLCM texture properties and rotation-invariant LBP, packed into 58 values.

Layout of the feature vector::

    [ 6 GLCM properties x 4 angles x 2 distances ]  (48, property-major,
                                                      then angle, then distance)
    [ 10 riu2 LBP histogram bins ]                  (labels 0..8, then 9 =
                                                      non-uniform)
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, FormatError
from .image_core import Image, quantize_levels, to_grayscale

GLCM_LEVELS = 16
GLCM_ANGLES = (0, 45, 90, 135)
GLCM_DISTANCES = (1, 3)
GLCM_PROPERTIES = ("contrast", "dissimilarity", "homogeneity", "asm", "energy", "correlation")
LBP_POINTS = 8
LBP_BINS = LBP_POINTS + 2
FEATURE_LENGTH = len(GLCM_PROPERTIES) * len(GLCM_ANGLES) * len(GLCM_DISTANCES) + LBP_BINS
MIN_FEATURE_SIDE = 8

# (row, col) step per unit distance; 45 degrees points up and to the right.
_ANGLE_STEPS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


@dataclass(frozen=True)
class Glcm:
    matrix: np.ndarray
    distance: int
    angle: int

    @property
    def levels(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class GlcmFeatures:
    contrast: float
    dissimilarity: float
    homogeneity: float
    asm: float
    energy: float
    correlation: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in GLCM_PROPERTIES)


def displacement(distance: int, angle: int) -> tuple[int, int]:
    if angle not in _ANGLE_STEPS:
        raise DomainError(f"angle must be one of {sorted(_ANGLE_STEPS)}, got {angle}")
    if distance < 1:
        raise DomainError("distance must be >= 1")
    dr, dc = _ANGLE_STEPS[angle]
    return dr * distance, dc * distance


def compute_glcm(labels: np.ndarray, distance: int, angle: int, levels: int = GLCM_LEVELS) -> Glcm:
    """Symmetric, normalized co-occurrence matrix of a quantized plane."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DimensionError("GLCM needs a 2-D label plane")
    if labels.size and (labels.min() < 0 or labels.max() >= levels):
        raise DomainError(f"labels must lie in [0, {levels - 1}]")
    dr, dc = displacement(distance, angle)
    h, w = labels.shape
    if abs(dr) >= h or abs(dc) >= w:
        raise DomainError(f"no pixel pairs at distance {distance}, angle {angle} in a {w}x{h} plane")
    # reference window and its displaced partner
    r0, r1 = max(0, -dr), h - max(0, dr)
    c0, c1 = max(0, -dc), w - max(0, dc)
    ref = labels[r0:r1, c0:c1].astype(np.int64).ravel()
    nbr = labels[r0 + dr:r1 + dr, c0 + dc:c1 + dc].astype(np.int64).ravel()
    counts = np.bincount(ref * levels + nbr, minlength=levels * levels).reshape(levels, levels)
    sym = (counts + counts.T).astype(np.float64)
    return Glcm(sym / sym.sum(), distance, angle)


def glcm_features(glcm: Glcm) -> GlcmFeatures:
    p = glcm.matrix
    n = p.shape[0]
    i, j = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    diff = i - j
    contrast = float(np.sum(p * diff * diff))
    dissimilarity = float(np.sum(p * np.abs(diff)))
    homogeneity = float(np.sum(p / (1.0 + diff * diff)))
    asm = float(np.sum(p * p))
    energy = math.sqrt(asm)

    mu_i = float(np.sum(i * p))
    mu_j = float(np.sum(j * p))
    var_i = float(np.sum(p * (i - mu_i) ** 2))
    var_j = float(np.sum(p * (j - mu_j) ** 2))
    # a single populated gray level carries no spread: treat as perfectly self-correlated
    if var_i < 1e-15 or var_j < 1e-15:
        correlation = 1.0
    else:
        cov = float(np.sum(p * (i - mu_i) * (j - mu_j)))
        correlation = min(1.0, max(-1.0, cov / math.sqrt(var_i * var_j)))
    return GlcmFeatures(contrast, dissimilarity, homogeneity, asm, energy, correlation)


# ---------------------------------------------------------------- LBP

def _riu2_table(points: int = LBP_POINTS) -> np.ndarray:
    table = np.empty(1 << points, dtype=np.int64)
    for code in range(1 << points):
        bits = [(code >> k) & 1 for k in range(points)]
        transitions = sum(bits[k] != bits[(k + 1) % points] for k in range(points))
        table[code] = sum(bits) if transitions <= 2 else points + 1
    return table


RIU2 = _riu2_table()


def compute_lbp(plane: np.ndarray) -> np.ndarray:
    """riu2 LBP labels (P=8, R=1) for the interior pixels, shape (H-2, W-2).

    Neighbors run counter-clockwise from the right-hand one.  The four
    diagonal samples sit at distance 1 and are bilinearly interpolated; the
    comparison against the center is evaluated on differences so that a flat
    neighborhood compares exactly equal.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 3 or plane.shape[1] < 3:
        raise DomainError("LBP needs a plane of at least 3x3")
    h, w = plane.shape

    def shifted(dr, dc):
        return plane[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]

    center = shifted(0, 0)
    t = 1.0 / math.sqrt(2.0)
    side = t * (1.0 - t)
    corner = t * t

    def axis_diff(dr, dc):
        return shifted(dr, dc) - center

    def diag_diff(dr, dc):
        # sample at (dr*t, dc*t) from the center, its cell is spanned by the
        # center, the two axis neighbors and the corner neighbor
        return side * (axis_diff(dr, 0) + axis_diff(0, dc)) + corner * axis_diff(dr, dc)

    # counter-clockwise: right, up-right, up, up-left, left, down-left, down, down-right
    diffs = [
        axis_diff(0, 1),
        diag_diff(-1, 1),
        axis_diff(-1, 0),
        diag_diff(-1, -1),
        axis_diff(0, -1),
        diag_diff(1, -1),
        axis_diff(1, 0),
        diag_diff(1, 1),
    ]
    code = np.zeros(center.shape, dtype=np.int64)
    for k, d in enumerate(diffs):
        code |= (d >= 0).astype(np.int64) << k
    return RIU2[code]


def lbp_histogram(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size == 0:
        raise DomainError("empty label plane")
    if labels.min() < 0 or labels.max() >= LBP_BINS:
        raise DomainError(f"LBP labels must lie in [0, {LBP_BINS - 1}]")
    counts = np.bincount(labels, minlength=LBP_BINS).astype(np.float64)
    return counts / counts.sum()


# ----------------------------------------------------------- combined

def extract_features(image: Image) -> np.ndarray:
    """The 58-value texture descriptor of an image."""
    if image.width < MIN_FEATURE_SIDE or image.height < MIN_FEATURE_SIDE:
        raise DomainError(f"image must be at least {MIN_FEATURE_SIDE}x{MIN_FEATURE_SIDE}")
    gray = to_grayscale(image)
    labels = quantize_levels(gray, GLCM_LEVELS)

    props = np.empty((len(GLCM_PROPERTIES), len(GLCM_ANGLES), len(GLCM_DISTANCES)))
    for a, angle in enumerate(GLCM_ANGLES):
        for d, dist in enumerate(GLCM_DISTANCES):
            props[:, a, d] = glcm_features(compute_glcm(labels, dist, angle, GLCM_LEVELS)).as_tuple()
    hist = lbp_histogram(compute_lbp(gray))
    vec = np.concatenate([props.ravel(), hist])
    assert vec.shape == (FEATURE_LENGTH,)
    return vec


def feature_names(with_label: bool = False) -> list[str]:
    names = [f"f{k}" for k in range(FEATURE_LENGTH)]
    return names + ["label"] if with_label else names


def write_feature_csv(path: str | os.PathLike, features: np.ndarray, labels=None) -> None:
    """One row per image; ``repr`` floats so a reload is exact."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != FEATURE_LENGTH:
        raise DimensionError(f"expected N x {FEATURE_LENGTH} features, got {features.shape}")
    if labels is not None and len(labels) != features.shape[0]:
        raise DimensionError("labels and feature rows differ in count")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(feature_names(labels is not None))
        for k, row in enumerate(features):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(int(labels[k])))
            writer.writerow(cells)


def read_feature_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray | None]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        has_label = header == feature_names(True)
        if not has_label and header != feature_names(False):
            raise FormatError(f"{path}: header must be f0..f{FEATURE_LENGTH - 1}[,label]")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:FEATURE_LENGTH]])
                if has_label:
                    labels.append(int(row[-1]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    features = np.array(rows, dtype=np.float64).reshape(-1, FEATURE_LENGTH)
    return features, (np.array(labels, dtype=np.int64) if has_label else None)
