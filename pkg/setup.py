"""Builds the optional compiled QP kernel.

If Cython or a C compiler is unavailable the build falls back to a pure
Python install; the package selects the NumPy kernel at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/urbansmpc/qp/_core.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    include_dirs = [numpy.get_include()]
except Exception:  # pragma: no cover - toolchain missing
    include_dirs = []

setup(
    ext_modules=ext_modules,
    include_dirs=include_dirs,
)
