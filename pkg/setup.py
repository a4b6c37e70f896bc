"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); building it just makes the hot kernels faster.
Cython is deliberately not a hard build requirement: install with
``pip install -e . --no-build-isolation`` in an environment that already has
Cython and a C compiler to get the compiled lane.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize

    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False


class optional_build_ext(build_ext):
    """Degrade to the pure-Python lane if the C toolchain is unusable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"WARNING: skipping compiled kernels ({exc}); "
                  f"the NumPy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: could not build {ext.name} ({exc}); "
                  f"the NumPy fallback will be used")


extensions = []
if HAVE_CYTHON:
    extensions = cythonize(
        [
            Extension(
                "ragsemcom._kernels._ext",
                ["src/ragsemcom/_kernels/_ext.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions, cmdclass={"build_ext": optional_build_ext})
