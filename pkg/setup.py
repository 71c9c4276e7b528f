from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "bgcosim._pf_core",
                ["src/bgcosim/_pf_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

# Without Cython the package still installs; the solver falls back to the
# numpy kernel selected at import time in bgcosim._kernels.
setup(ext_modules=ext_modules)
