"""Build the optional Cython kernels; the package works without them."""
import os
import platform

from setuptools import Extension, setup

# hardware popcount where the target surely has it
CFLAGS = ["-O3"] + (["-mpopcnt"] if platform.machine() in ("x86_64", "AMD64") else [])

ext_modules = []
if os.environ.get("BBS_SENSE_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "bbs_sense._kernels",
                    ["src/bbs_sense/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=CFLAGS,
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
