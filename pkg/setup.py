"""Build the optional Cython kernels.

run command: pip install -e . --no-build-isolation
If the extension fails to compile the package still installs and falls back
to the numpy kernels.
"""
from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
    import numpy as np
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "multiteach._ckernels",
                sources=["src/multiteach/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
