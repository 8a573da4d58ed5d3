import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fall back to the pure-python kernels
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension(
            "regmdp._kernels",
            ["src/regmdp/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
