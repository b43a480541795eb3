"""Build script for the compiled split-search kernel.

The package is fully functional without the extension (a NumPy fallback
is selected at import time), so a missing Cython just skips the build.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "fewcate._splitfast",
                ["src/fewcate/_splitfast.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
