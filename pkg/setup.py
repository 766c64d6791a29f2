"""Build script: compiles the optional matching kernel extension.

The package is fully functional without the extension (a pure-numpy
fallback is selected at import time); the extension only accelerates the
hot matching loops.  Build proceeds without it when Cython or a C
compiler is unavailable.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "bpsa._matchcore",
                ["src/bpsa/_matchcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
