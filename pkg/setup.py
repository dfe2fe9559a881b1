"""Build script for the optional compiled training kernels.

The package is pure Python except for xslearn._fastpath, a Cython
translation of the per-pair update loops in xslearn._fallback. If the
extension fails to build or import, the package still works: the backend
selector falls back to the numpy implementation.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "xslearn._fastpath",
        sources=["src/xslearn/_fastpath.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
