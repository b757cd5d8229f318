import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "accelmatch._kernels._fast",
                ["src/accelmatch/_kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,  # pure-numpy backend is used if the build fails
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
