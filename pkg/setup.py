"""Build the optional Cython kernels.

If Cython or a C compiler is unavailable the package still installs and
falls back to the NumPy kernels at import time.
"""
import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: skipping compiled kernels ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc})", file=sys.stderr)


try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "voltsmile._kernels",
                ["src/voltsmile/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fcx-fortran-rules"],
                define_macros=[("CYTHON_CCOMPLEX", "1"), ("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
