"""Time the compiled kernels against the pure-Python/numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 480x640]

Each case runs on both backends; outputs are checked for equality before
timing so a fast but wrong kernel cannot report a speedup.
"""
from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from distort_bench import _pykernels
from distort_bench.imaging import disk_kernel, motion_kernel

try:
    from distort_bench import _ckernels
except ImportError:
    _ckernels = None


def _cases(h: int, w: int):
    rng = np.random.default_rng(0)
    img = rng.random((h, w, 3))
    theta = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    radius = min(h, w) * (0.3 + 0.1 * np.sin(7 * theta))
    xs = w / 2 + radius * np.cos(theta)
    ys = h / 2 + radius * np.sin(theta)
    mask = np.asarray(rng.random((h, w)) < 0.02, dtype=bool)
    mask[h // 4 : h // 2, w // 4 : w // 2] = True
    counts = _pykernels.rle_encode(mask)
    return [
        ("correlate2d disk r=5", lambda k: k.correlate2d(img, disk_kernel(5))),
        ("correlate2d disk r=10", lambda k: k.correlate2d(img, disk_kernel(10))),
        ("correlate2d motion L=21", lambda k: k.correlate2d(img, motion_kernel(21, 0.7))),
        ("rasterize_polygon 200 vertices", lambda k: k.rasterize_polygon(xs, ys, h, w)),
        ("rle_encode", lambda k: k.rle_encode(mask)),
        ("rle_decode", lambda k: k.rle_decode(counts, h, w)),
    ]


def _time(fn, repeat: int) -> float:
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--size", default="480x640", help="HxW of the test image")
    args = parser.parse_args(argv)
    h, w = (int(v) for v in args.size.lower().split("x"))

    if _ckernels is None:
        print("compiled kernels not built; only the fallback can be timed", file=sys.stderr)
    print(f"{'case':<34}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in _cases(h, w):
        py = _time(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<34}{py * 1e3:>12.2f}{'-':>12}{'-':>10}")
            continue
        if not np.array_equal(fn(_pykernels), fn(_ckernels)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        cy = _time(lambda: fn(_ckernels), args.repeat)
        print(f"{name:<34}{py * 1e3:>12.2f}{cy * 1e3:>12.2f}{py / cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
