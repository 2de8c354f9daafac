"""Builds the optional compiled deposit kernel.

The package works without it (a pure-python twin is selected at import);
set CALMRELAY_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CALMRELAY_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "calmrelay._kernels._deposit_cy",
                    ["src/calmrelay/_kernels/_deposit_cy.pyx"],
                    # -ffp-contract=off keeps the compiled loop bit-identical
                    # to the pure-python twin (no FMA reassociation).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
