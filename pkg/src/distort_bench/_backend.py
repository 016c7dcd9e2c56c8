"""Pick the kernel implementation at import time.

The compiled extension is preferred; ``DISTORT_BENCH_BACKEND=python`` forces
the numpy fallback (useful for debugging and for the benchmark).
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("DISTORT_BENCH_BACKEND", "").lower() == "python":
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


kernels, BACKEND = _load()

__all__ = ["kernels", "BACKEND"]
