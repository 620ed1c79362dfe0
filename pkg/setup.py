"""Build script for the optional compiled kernels.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); the extension accelerates the coordinate-descent
sweeps and the Langevin chains used by the replication experiments.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "ewalasso._kernels",
                ["src/ewalasso/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=extensions)
