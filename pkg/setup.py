"""Build script for the optional compiled pair-operation kernels.

The package works without the extension (a NumPy fallback is selected at
import time); build failures here only cost speed, so they are non-fatal.
Build in place with: python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fplap._pairops_cy",
                ["src/fplap/_pairops_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
