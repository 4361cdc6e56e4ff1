"""Build the optional compiled simplex kernel.

The package works without the extension (a pure-numpy fallback is selected
at import time); building it makes the LP-heavy propagators considerably
faster.  `-ffp-contract=off` keeps the compiled kernel arithmetically
identical to the fallback so the two backends can be cross-checked.
"""

import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "nnreach.lp._simplex",
        sources=["src/nnreach/lp/_simplex.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    ),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    ),
)
