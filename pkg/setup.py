import os

import numpy as np
from setuptools import Extension, setup


def _extensions():
    if os.environ.get("EQUIPART_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "equipart._ckernels",
        ["src/equipart/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        # fp-contract=off keeps results bitwise identical to the numpy fallback
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
