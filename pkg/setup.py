import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    USE_CYTHON = True
except ImportError:
    USE_CYTHON = False

# Set MLMC_OPT_NO_EXT=1 to install without the compiled core.
if os.environ.get("MLMC_OPT_NO_EXT"):
    EXTENSIONS = []
else:
    source = "src/mlmc_opt/_core.pyx" if USE_CYTHON else "src/mlmc_opt/_core.c"
    EXTENSIONS = [
        Extension(
            "mlmc_opt._core",
            [source],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
    ]
    if USE_CYTHON:
        EXTENSIONS = cythonize(
            EXTENSIONS,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=EXTENSIONS)
