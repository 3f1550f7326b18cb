"""Build script for the compiled integration kernel.

The extension is optional at runtime: spikeobs falls back to a pure-Python
kernel with identical semantics if the build is unavailable (see
spikeobs.backend).  -ffp-contract=off keeps the compiled arithmetic
bit-identical to the pure-Python twin.
"""

import sys

from setuptools import Extension, setup

if sys.platform == "win32":
    extra_compile_args = ["/O2", "/fp:precise"]
else:
    extra_compile_args = ["-O3", "-ffp-contract=off"]

ext = Extension(
    "spikeobs._kernels",
    ["src/spikeobs/_kernels.pyx"],
    extra_compile_args=extra_compile_args,
)

try:
    from Cython.Build import cythonize

    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
