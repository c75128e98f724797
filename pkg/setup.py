"""Builds the optional compiled kernel extension.

The package works without it: duorep.kernels falls back to the NumPy
implementation when the extension is absent.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "duorep._kernels",
                ["src/duorep/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
