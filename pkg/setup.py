import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: no FMA contraction, so the compiled kernel rounds exactly
# like the numpy fallback and trajectories stay comparable across backends.
extensions = [
    Extension(
        "sadam._kernels._cystep",
        ["src/sadam/_kernels/_cystep.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
