"""Build script for the optional compiled kernels.

The package is fully functional without a C toolchain: if the extension
cannot be built, installation proceeds and phenolab falls back to the pure
numpy kernels at import time.
"""

import os
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

PYX = Path("src/phenolab/nn/_speedups.pyx")
C = PYX.with_suffix(".c")


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing entirely
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: building phenolab._speedups failed ({exc!r}); "
            "installing with the pure-python backend only.",
            file=sys.stderr,
        )


def _native_ok():
    """Probe whether the toolchain accepts -march=native."""
    import subprocess
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "probe.c"
        src.write_text("int main(void){return 0;}\n")
        try:
            return (
                subprocess.run(
                    ["cc", "-march=native", "-O3", str(src), "-o", str(Path(tmp) / "probe")],
                    capture_output=True,
                ).returncode
                == 0
            )
        except OSError:
            return False


def extensions():
    if sys.platform == "win32":
        compile_args = []
    else:
        compile_args = ["-O3"]
        # kernels are built from source on the target machine; native codegen
        # roughly halves training time. PHENOLAB_PORTABLE=1 opts out.
        if os.environ.get("PHENOLAB_PORTABLE") != "1" and _native_ok():
            compile_args.append("-march=native")
    try:
        from Cython.Build import cythonize

        ext = Extension(
            "phenolab.nn._speedups", [str(PYX)], extra_compile_args=compile_args
        )
        return cythonize([ext], language_level="3")
    except ImportError:
        if C.exists():  # pre-generated C shipped alongside the pyx
            return [
                Extension(
                    "phenolab.nn._speedups", [str(C)], extra_compile_args=compile_args
                )
            ]
        print(
            "WARNING: Cython not available and no pre-generated C source; "
            "skipping the compiled backend.",
            file=sys.stderr,
        )
        return []


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
