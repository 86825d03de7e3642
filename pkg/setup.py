import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are optional: without Cython the package installs
# with the pure-numpy fallback selected at import time.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "cmlm.kernels._core",
                ["src/cmlm/kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
