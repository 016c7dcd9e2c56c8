"""Build the optional Cython kernels.

The package works without them (pure numpy fallback); a missing Cython or
a failing compiler only skips the extension. Set
DISTORT_BENCH_NO_EXT=1 to skip compilation entirely.
"""
import os

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Keep installing with the numpy fallback when the compile fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            self.warn(f"compiled kernels not built, using the numpy fallback: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self.warn(f"skipping {ext.name}: {exc}")


ext_modules = []
if not os.environ.get("DISTORT_BENCH_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = [
            Extension(
                "distort_bench._ckernels",
                ["src/distort_bench/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: keeps results bit-identical to the numpy path
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
