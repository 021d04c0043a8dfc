"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-numpy fallback is selected at
import time), so a failed compilation downgrades to a warning instead of
aborting the install. Set LAKEJOIN_PURE_PYTHON=1 to skip compilation entirely.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except (CCompilerError, ExecError, PlatformError) as exc:
            print(f"WARNING: kernel extension build failed ({exc}); "
                  "falling back to pure-Python kernels", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError) as exc:
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "falling back to pure-Python kernels", file=sys.stderr)


ext_modules = []
cmdclass = {}
if not os.environ.get("LAKEJOIN_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "lakejoin.kernels._kernels",
                    ["src/lakejoin/kernels/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
        cmdclass["build_ext"] = optional_build_ext
    except ImportError:
        print("WARNING: Cython not available; installing pure-Python kernels only",
              file=sys.stderr)

setup(ext_modules=ext_modules, cmdclass=cmdclass)
