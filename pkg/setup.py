"""Build script for the optional compiled core.

The package works without the extension; ``rwpt.core`` falls back to the
numpy implementation when ``rwpt._ext`` cannot be imported.
"""
import os

from setuptools import setup
from setuptools.extension import Extension

ext_modules = []
if os.environ.get("RWPT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("rwpt._ext", ["src/rwpt/_ext.pyx"], extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
