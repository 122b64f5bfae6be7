import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SIGDESC_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "sigdesc._kernels",
                    ["src/sigdesc/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3", "-fopenmp"],
                    extra_link_args=["-fopenmp"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython in the build environment: install pure-Python only.
        # sigdesc.kernels falls back to the numpy implementation at import.
        ext_modules = []

setup(ext_modules=ext_modules)
