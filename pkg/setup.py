"""Build script for the optional compiled training kernel.

The package is fully functional without the extension (a pure-numpy
implementation of the same kernel is selected at import time), so the
build degrades gracefully when Cython or a C compiler is unavailable.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "naipw.firststage._speedups",
                ["src/naipw/firststage/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -fassociative-math lets the compiler vectorize the inner
                # reductions (summation order differs from numpy anyway);
                # NaN/Inf semantics stay intact, unlike full -ffast-math.
                extra_compile_args=[
                    "-O3",
                    "-march=native",
                    "-funroll-loops",
                    "-fassociative-math",
                    "-fno-signed-zeros",
                    "-fno-trapping-math",
                ],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
