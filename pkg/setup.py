"""Build script: the Cython kernels are optional.

If Cython or a C compiler is missing the package still installs and the
pure-Python kernels are used at import time.
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
                "blowup_lab._ckernels",
                ["src/blowup_lab/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"warning: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
