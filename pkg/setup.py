"""Build the optional Cython kernel extension.

The package works without it: ``boardsim.kernels`` falls back to the pure
Python implementation when ``boardsim._kernels`` cannot be imported.
Set ``BOARDSIM_NO_EXT=1`` to skip compiling entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("BOARDSIM_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext = Extension(
            "boardsim._kernels",
            ["src/boardsim/_kernels.pyx"],
            include_dirs=[np.get_include()],
            # keep a*b+c as two roundings so the extension matches the
            # pure-Python fallback bit for bit
            extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
        )
        ext_modules = cythonize(
            [ext],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
