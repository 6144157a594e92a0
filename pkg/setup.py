"""Build script: compiles the optional tree-kernel extension when a toolchain exists.

The package is fully functional without the extension; ``metarouter.regress``
falls back to the pure-numpy kernel at import time.  Set METAROUTER_NO_EXT=1
to skip the compilation attempt entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Best-effort build_ext: a failed compile degrades to the pure-Python backend."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            print(f"warning: skipping compiled tree kernel ({exc}); "
                  f"the pure-Python backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  f"the pure-Python backend will be used")


def extensions():
    if os.environ.get("METAROUTER_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "metarouter.regress._tree_cy",
        ["src/metarouter/regress/_tree_cy.pyx"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
