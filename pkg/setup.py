"""Build script for the optional compiled training kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time); set CASCADE_PURE_PYTHON=1 to skip compilation.
"""
import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("CASCADE_PURE_PYTHON"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "cascade._pvdm_inner",
        ["src/cascade/_pvdm_inner.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
