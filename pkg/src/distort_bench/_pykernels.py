"""Pure numpy implementations of the hot kernels.

Each function mirrors one in ``_ckernels.pyx`` and performs the same
floating-point operations in the same order, so both backends produce
bit-identical results.
"""
from __future__ import annotations

import numpy as np


def correlate2d(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate an (H, W, C) float64 image with a 2-D kernel, edge-replicated."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    h, w = img.shape[:2]
    padded = np.pad(img, ((ry, ry), (rx, rx), (0, 0)), mode="edge")
    out = np.zeros(img.shape, dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            weight = float(kernel[dy, dx])
            if weight == 0.0:
                continue
            out += weight * padded[dy : dy + h, dx : dx + w]
    return out


def rasterize_polygon(xs: np.ndarray, ys: np.ndarray, height: int, width: int) -> np.ndarray:
    """Even-odd fill of one polygon, sampled at pixel centers."""
    inside = np.zeros((height, width), dtype=bool)
    px = np.arange(width, dtype=np.float64) + 0.5
    py = np.arange(height, dtype=np.float64) + 0.5
    n = xs.shape[0]
    for i in range(n):
        j = (i - 1) % n
        x1, y1, x2, y2 = float(xs[i]), float(ys[i]), float(xs[j]), float(ys[j])
        rows = np.nonzero((py < y1) != (py < y2))[0]
        if rows.size == 0:
            continue
        xc = (x2 - x1) * (py[rows] - y1) / (y2 - y1) + x1
        inside[rows] ^= px[None, :] < xc[:, None]
    return inside


def rle_decode(counts: np.ndarray, height: int, width: int) -> np.ndarray:
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(counts, dtype=np.int64))
    return flat.reshape((height, width), order="F")


def rle_encode(mask: np.ndarray) -> np.ndarray:
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    if flat.size == 0:
        return np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).astype(np.int64)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return runs
