import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "reflband.montecarlo._kernels_cy",
        sources=[
            "src/reflband/montecarlo/_kernels_cy.pyx",
            "src/reflband/montecarlo/_kernels_core.c",
        ],
        include_dirs=[np.get_include(), "src/reflband/montecarlo"],
        # Full -ffast-math on purpose: it defines __FAST_MATH__, which is
        # what lets glibc expose its SIMD math declarations, and the
        # vectorized log/sin/cos are worth ~5x on the path loops.  The
        # kernels never rely on NaN/inf propagation (inputs are validated
        # and the Philox uniforms keep every normal bounded).
        extra_compile_args=[
            "-O3",
            "-march=native",
            "-funroll-loops",
            "-ffast-math",
        ],
        extra_link_args=["-lm", "-lmvec"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

if cythonize is not None:
    ext_modules = cythonize(extensions, language_level=3)
else:
    ext_modules = extensions

setup(ext_modules=ext_modules)
