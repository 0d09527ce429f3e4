"""Grayscale image loading and the raster primitives used by the proposal stage.

The core pipeline works on luminance only; colour is handled by the offline
feature exporter. All types are immutable and all operations are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# ITU-R BT.601 luminance weights. Fixed so results are identical across
# platforms regardless of the decoder's own grayscale conversion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_SUPPORTED_FORMATS = {"PNG", "JPEG"}


class ImageFormatError(ValueError):
    """Raised for undecodable or unsupported image files."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major luminance raster with values in [0, 1]."""

    width: int
    height: int
    data: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if self.data.shape != (self.height, self.width):
            raise ValueError(f"data shape {self.data.shape} does not match {self.width}x{self.height}")
        if self.data.dtype != np.float64:
            raise ValueError("image data must be float64")
        if not np.isfinite(self.data).all():
            raise ValueError("image data contains non-finite values")
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image values outside [0, 1]: min={lo}, max={hi}")

    @classmethod
    def from_array(cls, data: np.ndarray) -> GrayImage:
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)

    def crop(self, x1: int, y1: int, x2: int, y2: int) -> GrayImage:
        if not (0 <= x1 < x2 <= self.width and 0 <= y1 < y2 <= self.height):
            raise ValueError(f"crop ({x1},{y1},{x2},{y2}) outside image {self.width}x{self.height}")
        return GrayImage.from_array(self.data[y1:y2, x1:x2])


@dataclass(frozen=True, eq=False)
class GradientMap:
    """Per-pixel gradient magnitude (>= 0) and orientation folded to [0, pi)."""

    width: int
    height: int
    magnitude: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        for name in ("magnitude", "orientation"):
            arr = getattr(self, name)
            if arr.shape != (self.height, self.width):
                raise ValueError(f"{name} shape {arr.shape} does not match {self.width}x{self.height}")
        if float(self.magnitude.min(initial=0.0)) < 0.0:
            raise ValueError("gradient magnitude must be non-negative")


def load_image(path: str | Path) -> GrayImage:
    """Decode a PNG or JPEG file to luminance.

    Luminance is (0.299 R + 0.587 G + 0.114 B) / 255 computed in float, so the
    result does not depend on the decoder's integer grayscale rounding.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt not in _SUPPORTED_FORMATS:
                raise ImageFormatError(f"unsupported image format {fmt!r} for {path} (PNG or JPEG only)")
            if img.width < 1 or img.height < 1:
                raise ImageFormatError(f"zero-dimension image: {path}")
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    luma = (rgb[:, :, 0] * LUMA_WEIGHTS[0] + rgb[:, :, 1] * LUMA_WEIGHTS[1] + rgb[:, :, 2] * LUMA_WEIGHTS[2]) / 255.0
    return GrayImage.from_array(np.clip(luma, 0.0, 1.0))


def _sample_positions(src: int, dst: int) -> np.ndarray:
    # Corner-aligned sampling; an identity resize reproduces the source exactly.
    if dst == 1:
        return np.zeros(1, dtype=np.float64)
    return np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))


def resize_bilinear(img: GrayImage, w: int, h: int) -> GrayImage:
    """Resize with bilinear interpolation (corner-aligned sampling grid)."""
    if w < 1 or h < 1:
        raise ValueError(f"target dimensions must be positive, got {w}x{h}")
    xs = _sample_positions(img.width, w)
    ys = _sample_positions(img.height, h)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = xs - x0
    fy = ys - y0

    d = img.data
    top = d[y0[:, None], x0[None, :]] * (1.0 - fx) + d[y0[:, None], x1[None, :]] * fx
    bot = d[y1[:, None], x0[None, :]] * (1.0 - fx) + d[y1[:, None], x1[None, :]] * fx
    out = top * (1.0 - fy[:, None]) + bot * fy[:, None]
    # Interpolation is convex, but guard against 1-ulp excursions.
    np.clip(out, d.min(), d.max(), out=out)
    return GrayImage.from_array(out)


def gradient_map(img: GrayImage) -> GradientMap:
    """3x3 Sobel gradients; border pixels get magnitude 0."""
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image too small for gradients: {img.width}x{img.height} (need >= 3x3)")
    d = img.data
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    gx[1:-1, 1:-1] = (
        (d[:-2, 2:] + 2.0 * d[1:-1, 2:] + d[2:, 2:])
        - (d[:-2, :-2] + 2.0 * d[1:-1, :-2] + d[2:, :-2])
    )
    gy[1:-1, 1:-1] = (
        (d[2:, :-2] + 2.0 * d[2:, 1:-1] + d[2:, 2:])
        - (d[:-2, :-2] + 2.0 * d[:-2, 1:-1] + d[:-2, 2:])
    )
    magnitude = np.hypot(gx, gy)
    orientation = np.mod(np.arctan2(gy, gx), math.pi)
    orientation[orientation == math.pi] = 0.0  # fold the wrap point
    return GradientMap(width=img.width, height=img.height, magnitude=magnitude, orientation=orientation)


def save_png(img: GrayImage, path: str | Path) -> None:
    """Write as an 8-bit grayscale PNG (values scaled by 255)."""
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path), format="PNG")
