"""Build script.  Compiles the Cython term-arithmetic kernel when Cython and a
C compiler are available; the package falls back to the pure-Python kernel at
import time if the extension is missing."""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "supergeo._kernel.gkernel",
                ["src/supergeo/_kernel/gkernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
