"""Seeded synthesizers for the ten distortion kinds and labeled dataset building.

Every random draw comes from a numpy ``Generator`` seeded through
``SeedSequence``, so a (image, spec) pair always produces the same bytes, and
dataset rows derive their streams from ``(seed, row index)`` so the result
does not depend on how rows are scheduled across workers.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .errors import DomainError
from .features import extract_features
from .image_core import Image, convolve2d

logger = logging.getLogger(__name__)

MIN_SYNTH_SIDE = 16
AIRLIGHT = 240.0


class DistortionKind(enum.Enum):
    COMPRESSION = "D1"
    NOISE = "D2"
    CONTRAST = "D3"
    RAIN = "D4"
    HAZE = "D5"
    MOTION_BLUR = "D6"
    DEFOCUS_BLUR = "D7"
    LOCAL_BACKLIGHT = "D8"
    LOCAL_MOTION_BLUR = "D9"
    LOCAL_DEFOCUS_BLUR = "D10"

    @property
    def is_local(self) -> bool:
        return self in LOCAL_KINDS

    @classmethod
    def parse(cls, text: str) -> "DistortionKind":
        text = text.strip()
        try:
            return cls(text.upper())
        except ValueError:
            pass
        try:
            return cls[text.upper()]
        except KeyError:
            raise DomainError(f"unknown distortion kind {text!r}; expected D1..D10") from None


LOCAL_KINDS = frozenset(
    {DistortionKind.LOCAL_BACKLIGHT, DistortionKind.LOCAL_MOTION_BLUR, DistortionKind.LOCAL_DEFOCUS_BLUR}
)


class DistortionClass(enum.IntEnum):
    COMPRESSION = 0
    NOISE = 1
    CONTRAST_ILLUMINATION = 2
    RAIN = 3
    HAZE = 4
    BLUR = 5


_CLASS_OF = {
    DistortionKind.COMPRESSION: DistortionClass.COMPRESSION,
    DistortionKind.NOISE: DistortionClass.NOISE,
    DistortionKind.CONTRAST: DistortionClass.CONTRAST_ILLUMINATION,
    DistortionKind.RAIN: DistortionClass.RAIN,
    DistortionKind.HAZE: DistortionClass.HAZE,
    DistortionKind.MOTION_BLUR: DistortionClass.BLUR,
    DistortionKind.DEFOCUS_BLUR: DistortionClass.BLUR,
    DistortionKind.LOCAL_BACKLIGHT: DistortionClass.CONTRAST_ILLUMINATION,
    DistortionKind.LOCAL_MOTION_BLUR: DistortionClass.BLUR,
    DistortionKind.LOCAL_DEFOCUS_BLUR: DistortionClass.BLUR,
}


def class_of(kind: DistortionKind) -> DistortionClass:
    return _CLASS_OF[kind]


def kinds_of(cls: DistortionClass) -> list[DistortionKind]:
    return [k for k in DistortionKind if _CLASS_OF[k] is cls]


# Index 0 of every table is the identity setting reserved for tests.
JPEG_QUALITY = (None, 90, 70, 50, 30, 10)
NOISE_SIGMA = (0.0, 5.0, 10.0, 15.0, 25.0, 35.0)
CONTRAST_ALPHA = (1.0, 0.8, 0.65, 0.5, 0.4, 0.3)
RAIN_PER_MEGAPIXEL = (0, 100, 200, 400, 700, 1000)
HAZE_BETA = (0.0, 0.4, 0.8, 1.2, 1.8, 2.5)
MOTION_LENGTH = (1, 5, 9, 13, 17, 21)
DEFOCUS_RADIUS = (0, 2, 3, 4, 6, 8)
BACKLIGHT_GAIN = (1.0, 0.6, 0.5, 0.4, 0.3, 0.2)

IDENTITY_SEVERITY = 0


@dataclass(frozen=True)
class RegionSpec:
    """Feathered ellipse in relative coordinates."""

    cx: float
    cy: float
    rx: float
    ry: float
    feather: float = 0.0

    def __post_init__(self):
        if not (0 < self.rx <= 0.5 and 0 < self.ry <= 0.5):
            raise DomainError("region half-axes must lie in (0, 0.5]")
        if self.feather < 0:
            raise DomainError("feather must be >= 0")
        if not (0 <= self.cx <= 1 and 0 <= self.cy <= 1):
            raise DomainError("region center must lie in the unit square")
        # keep the ellipse inside the unit square
        object.__setattr__(self, "cx", min(max(self.cx, self.rx), 1 - self.rx))
        object.__setattr__(self, "cy", min(max(self.cy, self.ry), 1 - self.ry))

    def mask(self, height: int, width: int) -> np.ndarray:
        """Weights in [0, 1]: 1 inside the ellipse, linear fall-off over ``feather`` pixels."""
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        dx = xs + 0.5 - self.cx * width
        dy = ys + 0.5 - self.cy * height
        rho = np.sqrt((dx / (self.rx * width)) ** 2 + (dy / (self.ry * height)) ** 2)
        dist = np.hypot(dx, dy)
        # distance past the boundary along the ray from the center
        with np.errstate(divide="ignore", invalid="ignore"):
            outside = np.where(rho > 1.0, dist * (1.0 - 1.0 / np.maximum(rho, 1e-300)), 0.0)
        if self.feather == 0:
            return (rho <= 1.0).astype(np.float64)
        return np.clip(1.0 - outside / self.feather, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "rx": self.rx, "ry": self.ry, "feather": self.feather}

    @classmethod
    def random(cls, rng: np.random.Generator) -> "RegionSpec":
        rx, ry = rng.uniform(0.2, 0.4, size=2)
        cx = rng.uniform(rx, 1 - rx)
        cy = rng.uniform(ry, 1 - ry)
        return cls(float(cx), float(cy), float(rx), float(ry), float(rng.uniform(4.0, 12.0)))


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    severity: int
    seed: int
    region: RegionSpec | None = None

    def __post_init__(self):
        if not (IDENTITY_SEVERITY <= self.severity <= 5):
            raise DomainError(f"severity must be in 1..5, got {self.severity}")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.kind.is_local and self.region is None:
            raise DomainError(f"{self.kind.value} is a local distortion and needs a region")
        if not self.kind.is_local and self.region is not None:
            raise DomainError(f"{self.kind.value} is global and takes no region")

    @property
    def distortion_class(self) -> DistortionClass:
        return class_of(self.kind)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "severity": self.severity, "seed": self.seed}
        if self.region is not None:
            out["region"] = self.region.to_dict()
        return out


def rng_for(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


# ----------------------------------------------------------------- PSFs

def motion_psf(length: int, angle: float) -> np.ndarray:
    """Line-segment PSF of ``length`` pixels, ``angle`` degrees counter-clockwise from horizontal."""
    if length < 1:
        raise DomainError("motion length must be >= 1")
    if length == 1:
        return np.ones((1, 1))
    side = length if length % 2 else length + 1
    c = side // 2
    kernel = np.zeros((side, side))
    theta = math.radians(angle)
    dx, dy = math.cos(theta), -math.sin(theta)
    half = (length - 1) / 2.0
    # splat densely sampled points along the segment with bilinear weights
    for s in np.linspace(-half, half, 16 * length + 1):
        x, y = c + s * dx, c + s * dy
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        for yy, xx, wgt in (
            (y0, x0, (1 - fx) * (1 - fy)),
            (y0, x0 + 1, fx * (1 - fy)),
            (y0 + 1, x0, (1 - fx) * fy),
            (y0 + 1, x0 + 1, fx * fy),
        ):
            if 0 <= yy < side and 0 <= xx < side:
                kernel[yy, xx] += wgt
    kernel[kernel < 1e-12] = 0.0
    return kernel / kernel.sum()


def disk_psf(radius: float) -> np.ndarray:
    """Uniform disk PSF, anti-aliased by 8x8 supersampling."""
    if radius < 0:
        raise DomainError("disk radius must be >= 0")
    if radius == 0:
        return np.ones((1, 1))
    half = int(math.ceil(radius))
    sub = 8
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    ax = np.arange(-half, half + 1, dtype=np.float64)
    yy = (ax[:, None, None, None] + offs[None, None, :, None])
    xx = (ax[None, :, None, None] + offs[None, None, None, :])
    inside = (yy ** 2 + xx ** 2) <= radius ** 2
    kernel = inside.mean(axis=(2, 3))
    return kernel / kernel.sum()


def blur_image(pixels: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Convolve each channel of an (H, W, C) float array."""
    if psf.shape == (1, 1):
        return pixels * psf[0, 0]
    return np.stack([convolve2d(pixels[:, :, c], psf) for c in range(pixels.shape[2])], axis=2)


# ------------------------------------------------------ synthesizers

_LUMA_QUANT = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def quant_table(quality: int) -> np.ndarray:
    """IJG scaling of the standard luminance table."""
    quality = min(max(int(quality), 1), 100)
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((_LUMA_QUANT * scale + 50.0) / 100.0), 1, 255)


def _rgb_to_ycc(px):
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def _ycc_to_rgb(ycc):
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128, ycc[..., 2] - 128
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def jpeg_quantize(pixels: np.ndarray, quality: int) -> np.ndarray:
    """8x8 block DCT, quantize with the scaled table, reconstruct."""
    h, w, c = pixels.shape
    table = quant_table(quality)
    planes = _rgb_to_ycc(pixels) if c == 3 else pixels
    ph, pw = -h % 8, -w % 8
    padded = np.pad(planes, ((0, ph), (0, pw), (0, 0)), mode="edge") - 128.0
    hh, ww = padded.shape[:2]
    blocks = padded.reshape(hh // 8, 8, ww // 8, 8, c).transpose(0, 2, 4, 1, 3)
    coef = fft.dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / table) * table
    rec = fft.idctn(coef, axes=(-2, -1), norm="ortho")
    rec = rec.transpose(0, 3, 1, 4, 2).reshape(hh, ww, c)[:h, :w] + 128.0
    rec = np.clip(np.rint(rec), 0, 255)
    return _ycc_to_rgb(rec) if c == 3 else rec


def haze_transmission(height: int, width: int, beta: float) -> np.ndarray:
    """t = exp(-beta * depth) with depth ramping linearly from 1 (top) to 0.2 (bottom)."""
    depth = np.linspace(1.0, 0.2, height) if height > 1 else np.ones(1)
    return np.repeat(np.exp(-beta * depth)[:, None], width, axis=1)


def apply_haze(pixels: np.ndarray, transmission: np.ndarray, airlight: float = AIRLIGHT) -> np.ndarray:
    t = transmission[:, :, None]
    return pixels * t + airlight * (1.0 - t)


def _line_points(x0, y0, length, angle):
    theta = math.radians(angle)
    s = np.linspace(-length / 2.0, length / 2.0, int(2 * length) + 1)
    return x0 + s * math.cos(theta), y0 - s * math.sin(theta)


def add_rain(pixels: np.ndarray, per_megapixel: float, rng: np.random.Generator) -> np.ndarray:
    h, w, _ = pixels.shape
    count = int(round(per_megapixel * h * w / 1e6))
    if per_megapixel > 0:
        count = max(count, 1)
    layer = np.zeros((h, w))
    pad = 24
    for _ in range(count):
        length = rng.uniform(15, 35)
        angle = rng.uniform(70, 110)
        bright = rng.uniform(40, 90)
        x0, y0 = rng.uniform(0, w), rng.uniform(0, h)
        # render in a local canvas, blur along the streak, then paste
        side = int(math.ceil(length)) + 2 * pad
        canvas = np.zeros((side, side))
        xs, ys = _line_points(side / 2.0, side / 2.0, length, angle)
        canvas[np.clip(np.rint(ys).astype(int), 0, side - 1), np.clip(np.rint(xs).astype(int), 0, side - 1)] = bright
        canvas = convolve2d(canvas, motion_psf(5, angle))
        top, left = int(round(y0)) - side // 2, int(round(x0)) - side // 2
        ty0, tx0 = max(top, 0), max(left, 0)
        ty1, tx1 = min(top + side, h), min(left + side, w)
        if ty1 > ty0 and tx1 > tx0:
            layer[ty0:ty1, tx0:tx1] += canvas[ty0 - top:ty1 - top, tx0 - left:tx1 - left]
    return pixels + layer[:, :, None]


def _blend(original, distorted, mask):
    m = mask[:, :, None]
    return original * (1.0 - m) + distorted * m


def apply_distortion(image: Image, spec: DistortionSpec) -> Image:
    """Apply one distortion; deterministic for a fixed (image, spec)."""
    if image.width < MIN_SYNTH_SIDE or image.height < MIN_SYNTH_SIDE:
        raise DomainError(f"image must be at least {MIN_SYNTH_SIDE}x{MIN_SYNTH_SIDE}")
    if spec.kind.is_local and spec.region is None:
        raise DomainError("local distortion without region")
    rng = rng_for(spec.seed)
    px = image.as_float()
    sev = spec.severity
    kind = spec.kind
    h, w = image.height, image.width

    if kind is DistortionKind.COMPRESSION:
        quality = JPEG_QUALITY[sev]
        out = px if quality is None else jpeg_quantize(px, quality)
    elif kind is DistortionKind.NOISE:
        out = px + rng.normal(0.0, NOISE_SIGMA[sev], size=px.shape)
    elif kind is DistortionKind.CONTRAST:
        out = CONTRAST_ALPHA[sev] * (px - 128.0) + 128.0
    elif kind is DistortionKind.RAIN:
        out = add_rain(px, RAIN_PER_MEGAPIXEL[sev], rng)
    elif kind is DistortionKind.HAZE:
        out = apply_haze(px, haze_transmission(h, w, HAZE_BETA[sev]))
    elif kind is DistortionKind.MOTION_BLUR:
        out = blur_image(px, motion_psf(MOTION_LENGTH[sev], rng.uniform(0.0, 180.0)))
    elif kind is DistortionKind.DEFOCUS_BLUR:
        out = blur_image(px, disk_psf(DEFOCUS_RADIUS[sev]))
    else:
        mask = spec.region.mask(h, w)
        if kind is DistortionKind.LOCAL_BACKLIGHT:
            out = px * (1.0 - mask[:, :, None] * (1.0 - BACKLIGHT_GAIN[sev]))
        elif kind is DistortionKind.LOCAL_MOTION_BLUR:
            out = _blend(px, blur_image(px, motion_psf(MOTION_LENGTH[sev], rng.uniform(0.0, 180.0))), mask)
        else:
            out = _blend(px, blur_image(px, disk_psf(DEFOCUS_RADIUS[sev])), mask)
    return Image.from_float(out)


# ------------------------------------------------------------ datasets

@dataclass
class Provenance:
    source: int
    spec: DistortionSpec

    def to_dict(self) -> dict:
        return {"source": self.source, **self.spec.to_dict(), "class": int(class_of(self.spec.kind))}


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    provenance: list[Provenance] = field(default_factory=list)

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise DomainError("feature and label row counts differ")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(DistortionClass)):
            raise DomainError("labels must lie in 0..5")

    def __len__(self):
        return self.labels.shape[0]


def draw_spec(rng: np.random.Generator, cls: DistortionClass, severities=(1, 2, 3, 4, 5)) -> DistortionSpec:
    """Pick a kind within ``cls``, a severity and a seed (plus a region for local kinds)."""
    kinds = kinds_of(cls)
    kind = kinds[int(rng.integers(len(kinds)))]
    severity = int(severities[int(rng.integers(len(severities)))])
    seed = int(rng.integers(0, 2**63))
    region = RegionSpec.random(rng) if kind.is_local else None
    return DistortionSpec(kind, severity, seed, region)


def _dataset_row(clean_images, seed, row, cls):
    rng = rng_for(seed, 0, row)
    source = int(rng.integers(len(clean_images)))
    spec = draw_spec(rng, cls)
    distorted = apply_distortion(clean_images[source], spec)
    return extract_features(distorted), Provenance(source, spec)


def build_dataset(clean_images: list[Image], per_class: int, seed: int, workers: int = 1) -> LabeledDataset:
    """``per_class`` synthesized rows for each of the six classes, shuffled by ``seed``."""
    if not clean_images:
        raise DomainError("need at least one clean image")
    if per_class < 1:
        raise DomainError("per_class must be >= 1")
    jobs = [(row, DistortionClass(row // per_class)) for row in range(per_class * len(DistortionClass))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _dataset_row(clean_images, seed, *job), jobs))
    else:
        results = [_dataset_row(clean_images, seed, *job) for job in jobs]
    labels = np.array([int(cls) for _, cls in jobs], dtype=np.int64)
    features = np.stack([f for f, _ in results])
    provenance = [p for _, p in results]
    order = rng_for(seed, 1).permutation(len(jobs))
    logger.debug("built %d dataset rows", len(jobs))
    return LabeledDataset(features[order], labels[order], [provenance[i] for i in order])
