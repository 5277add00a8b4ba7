"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension; ``auglm._kernels``
falls back to a NumPy/SciPy implementation when the compiled module is
missing.  Any failure while cythonizing or compiling is therefore reported
but not fatal.
"""

import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "auglm._kernels._compiled",
                sources=["src/auglm/_kernels/_compiled.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-time only
    print(f"warning: building without compiled kernels ({exc})", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
