"""Build script: compiles the Cython jet-propagation kernel when Cython is
available.  Without it the package still installs and falls back to the pure
Python kernel at import time."""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "jlm_lab._jetkernel_cy",
                ["src/jlm_lab/_jetkernel_cy.pyx"],
                # No -ffast-math, and no sincos fusion: the pure-Python
                # fallback must stay bit-identical to this kernel.
                extra_compile_args=["-O3", "-fno-builtin-sincos"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
