"""Kernel backend selection.

``ERACNN_BACKEND`` picks the implementation of the conv/pool hot loops:

* ``numpy`` - im2col + BLAS matmuls (kernels_numpy)
* ``numba`` - serial @njit loops (kernels_numba)
* ``auto``  - numpy when available BLAS is fast (the default here), numba
              kept importable as the explicit opt-in; if numba cannot be
              imported at all, auto silently stays on numpy.

Run ``python benchmarks/bench_kernels.py`` for the comparison on the
current machine. Both backends are exact up to summation order and are
parity-tested against each other.
"""

import os
import warnings

from . import kernels_numpy

_choice = os.environ.get("ERACNN_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numpy", "numba"):
    warnings.warn(f"unknown ERACNN_BACKEND={_choice!r}, falling back to auto")
    _choice = "auto"

if _choice == "numba":
    from . import kernels_numba as _impl

    BACKEND = "numba"
else:
    _impl = kernels_numpy
    BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_grad_kernel = _impl.conv2d_grad_kernel
conv2d_grad_input = _impl.conv2d_grad_input
avgpool_forward = _impl.avgpool_forward
avgpool_grad_input = _impl.avgpool_grad_input


def active_backend():
    return BACKEND
