"""Build the optional compiled likelihood kernels.

The package works without them: ``jointpred._backend`` falls back to the
numpy implementation when the extension is missing.
"""
import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("JOINTPRED_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "jointpred._kernels",
                ["src/jointpred/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
