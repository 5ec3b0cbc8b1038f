"""Build the optional compiled kernels (ADMM iteration, RK4 interval).

If Cython or a C compiler is unavailable the package still installs and
``modmpc.qp`` falls back to the pure-numpy loop.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"WARNING: compiled kernel not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"WARNING: failed to build {ext.name} ({exc}); using numpy fallback")


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    exts = [
        Extension(f"modmpc.{name}", [f"src/modmpc/{name}.pyx"], extra_compile_args=["-O3"])
        for name in ("_admm_kernel", "_sim_kernel")
    ]
    return cythonize(exts, compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
