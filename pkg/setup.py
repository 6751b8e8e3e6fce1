"""Build the optional Cython ring kernel.

The package works without it; ``encgraph.ring`` falls back to the pure-Python
kernel when the extension cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ENCGRAPH_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "encgraph._ringcore",
                    ["src/encgraph/_ringcore.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
