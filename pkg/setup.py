"""Build script for the compiled kernel extension.

The extension is optional at runtime: if the build is unavailable the
package falls back to the pure-NumPy kernels in ``tgifa._kernels_py``.
"""
import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "tgifa._kernels",
        sources=["src/tgifa/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    ),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    ),
)
