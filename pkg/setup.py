"""Build script: compiles the optional fast expression-evaluator extension.

The package is fully functional without the extension (a pure-Python
interpreter for the same instruction format is selected at import time),
so any failure here degrades gracefully to the fallback.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "symcon._tape_c",
                sources=["src/symcon/_tape_c.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
