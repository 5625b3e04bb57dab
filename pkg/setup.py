import numpy as np
from setuptools import setup, Extension
from Cython.Build import cythonize

# Compiled popcount/XNOR kernels. The package falls back to a pure-numpy
# implementation when this extension is unavailable (see bineeg.bits).
ext = Extension(
    "bineeg._bitops",
    ["src/bineeg/_bitops.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize(ext, language_level="3"))
