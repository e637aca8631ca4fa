"""Backend selection for the sampling kernels.

The compiled module is used when it was built; otherwise, or when the
environment variable NSPGDS_PURE_PYTHON is set, the pure-Python mirror is
used. Both give identical draws for identical streams.
"""
import os
import warnings

from . import _kernels_py

if os.environ.get('NSPGDS_PURE_PYTHON'):
    impl = _kernels_py
    BACKEND = 'python'
else:
    try:
        from . import _kernels as impl
        BACKEND = 'compiled'
    except ImportError:
        warnings.warn('compiled kernels not available, using the slow pure-Python fallback')
        impl = _kernels_py
        BACKEND = 'python'

crt = impl.crt
crt_many = impl.crt_many
sumlog = impl.sumlog
bessel = impl.bessel
sch = impl.sch
mult = impl.mult
dirichlet = impl.dirichlet
allocate = impl.allocate
backward_l = impl.backward_l
forward_theta = impl.forward_theta
