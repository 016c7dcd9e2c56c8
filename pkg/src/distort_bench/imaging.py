"""Image buffers, blur kernels, masked blending, morphology and PSNR.

Images travel in two forms: ``uint8`` arrays of shape (H, W, 3) on disk and
at API boundaries, and ``float64`` arrays scaled to [0, 1] internally.
Kernels are 2-D float64 arrays with odd sides whose weights sum to 1.
"""
from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
from PIL import Image

from ._backend import kernels
from .errors import ParameterError, ShapeError

KERNEL_SUM_TOL = 1e-9


def to_float(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 255.0


def to_u8(img: np.ndarray) -> np.ndarray:
    """Clip to [0, 1], scale, and round half up."""
    scaled = np.clip(img, 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def _check_kernel(k: np.ndarray) -> np.ndarray:
    k = np.ascontiguousarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ShapeError(f"kernel sides must be odd, got shape {k.shape}")
    if (k < 0).any() or abs(k.sum() - 1.0) > KERNEL_SUM_TOL:
        raise ParameterError("kernel must be non-negative and sum to 1")
    return k


def convolve2d(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Per-channel 2-D correlation with clamp-to-edge padding; shape preserved.

    Accepts (H, W) or (H, W, C) float images.
    """
    k = _check_kernel(k)
    arr = np.asarray(img, dtype=np.float64)
    flat = arr.ndim == 2
    if flat:
        arr = arr[:, :, None]
    out = kernels.correlate2d(np.ascontiguousarray(arr), k)
    return out[:, :, 0] if flat else out


def _bresenham(x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer points on the line from (0, 0) to (x1, y1)."""
    points = []
    x, y = 0, 0
    dx, dy = abs(x1), -abs(y1)
    sx = 1 if x1 > 0 else -1
    sy = 1 if y1 > 0 else -1
    err = dx + dy
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Uniform line PSF of odd ``length`` at ``angle`` radians (counter-clockwise
    from the +x axis), symmetric about the kernel center."""
    if int(length) != length or length < 1 or length % 2 == 0:
        raise ParameterError(f"motion kernel length must be odd and >= 1, got {length}")
    length = int(length)
    half = (length - 1) // 2
    ex = math.floor(half * math.cos(angle) + 0.5)
    ey = -math.floor(half * math.sin(angle) + 0.5)
    k = np.zeros((length, length), dtype=np.float64)
    for px, py in _bresenham(ex, ey):
        k[half + py, half + px] = 1.0
        k[half - py, half - px] = 1.0
    return k / k.sum()


def disk_kernel(radius: int) -> np.ndarray:
    """Flat disk of pixels whose centers lie within ``radius + 0.5`` of the center."""
    if int(radius) != radius or radius < 0:
        raise ParameterError(f"disk radius must be a non-negative integer, got {radius}")
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    k = (np.hypot(xx, yy) <= r + 0.5).astype(np.float64)
    return k / k.sum()


def box_kernel(radius: int) -> np.ndarray:
    side = 2 * radius + 1
    return np.full((side, side), 1.0 / (side * side))


def _box_count(mask: np.ndarray, r: int, *, replicate: bool) -> np.ndarray:
    """Number of set pixels in each (2r+1)^2 window, via integral image."""
    m = np.asarray(mask, dtype=np.int64)
    mode = "edge" if replicate else "constant"
    p = np.pad(m, r, mode=mode)
    s = np.zeros((p.shape[0] + 1, p.shape[1] + 1), dtype=np.int64)
    s[1:, 1:] = p.cumsum(0).cumsum(1)
    side = 2 * r + 1
    h, w = m.shape
    return s[side : side + h, side : side + w] - s[:h, side : side + w] - s[side : side + h, :w] + s[:h, :w]


def feather_alpha(mask: np.ndarray, feather: int) -> np.ndarray:
    """Mask softened by a normalized box blur; exactly 0 or 1 away from edges."""
    if feather < 0:
        raise ParameterError(f"feather must be >= 0, got {feather}")
    if feather == 0:
        return np.asarray(mask, dtype=np.float64)
    side = 2 * feather + 1
    return _box_count(mask, feather, replicate=True) / float(side * side)


def blend_masked(
    base: np.ndarray, modified: np.ndarray, mask: np.ndarray, feather: int
) -> np.ndarray:
    """``alpha * modified + (1 - alpha) * base`` with alpha the feathered mask."""
    base = np.asarray(base, dtype=np.float64)
    modified = np.asarray(modified, dtype=np.float64)
    if base.shape != modified.shape or base.shape[:2] != np.shape(mask):
        raise ShapeError(
            f"blend inputs disagree: base {base.shape}, modified {modified.shape}, mask {np.shape(mask)}"
        )
    alpha = feather_alpha(mask, feather)
    if base.ndim == 3:
        alpha = alpha[:, :, None]
    return alpha * modified + (1.0 - alpha) * base


def dilate(mask: np.ndarray, r: int) -> np.ndarray:
    """Binary dilation by a (2r+1)-square structuring element."""
    if r < 0:
        raise ParameterError(f"dilation radius must be >= 0, got {r}")
    mask = np.asarray(mask, dtype=bool)
    if r == 0:
        return mask.copy()
    return _box_count(mask, r, replicate=False) > 0


def ring(mask: np.ndarray, r: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    return dilate(mask, r) & ~mask


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB over all RGB samples of float-form images (uint8 is converted)."""
    fa = to_float(a) if np.asarray(a).dtype == np.uint8 else np.asarray(a, dtype=np.float64)
    fb = to_float(b) if np.asarray(b).dtype == np.uint8 else np.asarray(b, dtype=np.float64)
    if fa.shape != fb.shape:
        raise ShapeError(f"psnr shape mismatch: {fa.shape} vs {fb.shape}")
    mse = float(np.mean((fa - fb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


# ------------------------------------------------------------------- codecs, I/O


def encode_jpeg(img: np.ndarray, quality: int) -> bytes:
    if int(quality) != quality or not 1 <= quality <= 100:
        raise ParameterError(f"JPEG quality must be in 1..100, got {quality}")
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(
        buf, format="JPEG", quality=int(quality), subsampling=2, optimize=False
    )
    return buf.getvalue()


def decode_image(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode a uint8 RGB image as baseline JPEG and decode it again."""
    return decode_image(encode_jpeg(img, quality))


PNG_COMPRESS_LEVEL = 1  # lossless either way; level 6 costs ~4x the time for ~20% smaller files


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(
        buf, format="PNG", compress_level=PNG_COMPRESS_LEVEL
    )
    return buf.getvalue()


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_png(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(img))
