"""Build script for the optional compiled message-passing kernels.

The package is fully functional without the extension; lsesmp.kernels
falls back to the numpy implementation when the compiled module is
missing or fails to build.
"""
import numpy as np
from setuptools import setup
from setuptools.errors import CCompilerError, ExecError, PlatformError


def build_extensions():
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "lsesmp.kernels._core",
        ["src/lsesmp/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


try:
    extensions = build_extensions()
except Exception as exc:  # pragma: no cover - build env without cython
    print(f"lsesmp: skipping compiled kernels ({exc!r}); numpy fallback will be used")
    extensions = []

try:
    setup(ext_modules=extensions)
except (CCompilerError, ExecError, PlatformError) as exc:  # pragma: no cover
    print(f"lsesmp: compiled kernel build failed ({exc!r}); installing pure version")
    setup(ext_modules=[])
