"""Pixel buffers, PGM/PPM/PNG I/O and the filtering primitives used everywhere else.

Float planes are plain 2-D ``float64`` arrays.  Every border-sensitive
operation uses reflect-101 extension (``d c b | a b c d | c b a``), which is
what scipy calls ``mode="mirror"`` and numpy calls ``mode="reflect"``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionError, DomainError, FormatError, IoError, UnsupportedError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
BORDER = "mirror"


@dataclass(frozen=True, eq=False)
class Image:
    """An 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.

    ``pixels`` always has shape ``(height, width, channels)`` and dtype uint8;
    the array is made read-only so an Image can be shared freely.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise DimensionError(f"expected (H, W, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionError("image must be at least 1x1")
        if px.dtype != np.uint8:
            raise DomainError(f"pixels must be uint8, got {px.dtype}")
        px = np.ascontiguousarray(px).copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> bytes:
        """Row-major, channel-interleaved samples."""
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None

    def __repr__(self):
        return f"Image({self.width}x{self.height}x{self.channels})"

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, data: bytes) -> "Image":
        if len(data) != width * height * channels:
            raise DimensionError("data length must equal width*height*channels")
        arr = np.frombuffer(bytes(data), dtype=np.uint8).reshape(height, width, channels)
        return cls(arr)

    @classmethod
    def from_float(cls, arr: np.ndarray) -> "Image":
        """Round and clamp a float array of shape (H, W) or (H, W, C) into an Image."""
        arr = np.asarray(arr, dtype=np.float64)
        arr = np.nan_to_num(arr, nan=0.0, posinf=255.0, neginf=0.0)
        return cls(np.clip(np.rint(arr), 0, 255).astype(np.uint8))

    def as_float(self) -> np.ndarray:
        """(H, W, C) float64 copy of the samples."""
        return self.pixels.astype(np.float64)


# ---------------------------------------------------------------- file I/O

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*")


def _read_pnm(raw: bytes) -> Image:
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic number {magic!r}")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    values = []
    for _ in range(3):
        m = _PNM_TOKEN.match(raw, pos)
        pos = m.end()
        m = re.compile(rb"\d+").match(raw, pos)
        if m is None:
            raise FormatError("malformed PNM header")
        values.append(int(m.group()))
        pos = m.end()
    if pos >= len(raw) or raw[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError("missing whitespace after maxval")
    pos += 1
    width, height, maxval = values
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}")
    if maxval > 255:
        raise UnsupportedError(f"maxval {maxval} implies more than 8 bits per sample")
    if maxval < 1:
        raise FormatError("maxval must be positive")
    n = width * height * channels
    payload = raw[pos:pos + n]
    if len(payload) < n:
        raise FormatError(f"truncated payload: expected {n} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    if maxval != 255:
        if arr.max(initial=0) > maxval:
            raise FormatError("sample exceeds maxval")
        arr = np.rint(arr.astype(np.float64) * 255.0 / maxval).astype(np.uint8)
    return Image(arr)


def load_image(path: str | os.PathLike) -> Image:
    """Read a binary PGM (P5), PPM (P6) or 8-bit PNG file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if raw.startswith(b"\x89PNG"):
        return _read_png(path)
    return _read_pnm(raw)


def _read_png(path: Path) -> Image:
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            mode = im.mode
            if mode in ("I;16", "I;16B", "I", "F"):
                raise UnsupportedError(f"PNG mode {mode} is not 8-bit")
            if mode in ("L", "1"):
                arr = np.asarray(im.convert("L"))
            elif mode == "LA":
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (UnsupportedError, FormatError):
        raise
    except OSError as exc:
        raise FormatError(f"cannot decode PNG {path}: {exc}") from exc
    return Image(arr)


def encode_pnm(image: Image) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    return header + image.data


def save_image(image: Image, path: str | os.PathLike) -> None:
    """Write P5 for gray, P6 for RGB; PNG when the suffix is ``.png``."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".png":
            from PIL import Image as PILImage

            px = image.pixels[:, :, 0] if image.channels == 1 else image.pixels
            PILImage.fromarray(px).save(path, format="PNG")
        else:
            path.write_bytes(encode_pnm(image))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------- conversions

def to_grayscale(image: Image) -> np.ndarray:
    """BT.601 luma as a float plane; gray input passes through."""
    px = image.as_float()
    if image.channels == 1:
        return px[:, :, 0]
    r, g, b = LUMA_WEIGHTS
    return r * px[:, :, 0] + g * px[:, :, 1] + b * px[:, :, 2]


def quantize_levels(plane: np.ndarray, levels: int = 16) -> np.ndarray:
    """Map samples in [0, 255] to integer labels ``floor(v * levels / 256)``."""
    if levels < 2:
        raise DomainError("levels must be >= 2")
    plane = np.asarray(plane, dtype=np.float64)
    if plane.size and (not np.all(np.isfinite(plane)) or plane.min() < 0 or plane.max() > 255):
        raise DomainError("samples must lie in [0, 255]")
    labels = np.floor(plane * levels / 256.0).astype(np.int64)
    return np.minimum(labels, levels - 1)


# ------------------------------------------------------------ filtering

def convolve2d(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """True 2-D convolution with reflect-101 borders; output matches input shape."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise DomainError(f"kernel sides must be odd, got {kernel.shape}")
    plane = np.asarray(plane, dtype=np.float64)
    return ndimage.convolve(plane, kernel, mode=BORDER)


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    half = int(math.ceil(3 * sigma))
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def box_mean(plane: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)x(2r+1) window around each pixel, reflect-101 borders."""
    return ndimage.uniform_filter(np.asarray(plane, dtype=np.float64), size=2 * radius + 1, mode=BORDER)


def guided_filter(guide: np.ndarray, src: np.ndarray, radius: int, epsilon: float) -> np.ndarray:
    """Edge-preserving smoothing of ``src`` steered by ``guide`` (gray guide)."""
    guide = np.asarray(guide, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    if guide.shape != src.shape:
        raise DomainError(f"guide {guide.shape} and input {src.shape} differ")
    if radius < 1 or not epsilon > 0:
        raise DomainError("guided filter needs radius >= 1 and epsilon > 0")
    mean_i = box_mean(guide, radius)
    mean_p = box_mean(src, radius)
    var_i = box_mean(guide * guide, radius) - mean_i * mean_i
    cov_ip = box_mean(guide * src, radius) - mean_i * mean_p
    a = cov_ip / (var_i + epsilon)
    b = mean_p - a * mean_i
    return box_mean(a, radius) * guide + box_mean(b, radius)
