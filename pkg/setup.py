import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

np_root = os.path.abspath(os.path.join(np.get_include(), '..', '..'))
lib_dirs = [os.path.join(np_root, 'random', 'lib'), os.path.join(np_root, '_core', 'lib')]

ext_modules = []
if cythonize is not None and not os.environ.get('NSPGDS_NO_EXT'):
    ext = Extension(
        'nspgds._kernels',
        ['src/nspgds/_kernels.pyx'],
        include_dirs=[np.get_include()],
        library_dirs=lib_dirs,
        libraries=['npyrandom', 'npymath'],
        define_macros=[('NPY_NO_DEPRECATED_API', 'NPY_1_7_API_VERSION')],
        extra_compile_args=['-O2', '-ffp-contract=off'],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
