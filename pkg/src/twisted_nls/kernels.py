"""Kernel backend selection.

The compiled extension is used when it was built and imports cleanly; set
``TNLS_PURE_PYTHON=1`` to force the NumPy fallback.
"""

import os

from . import _pykernels

__all__ = ["BACKEND", "backend", "psi_m", "dpsi_m", "gtilde_m", "g_m", "gtilde_sum", "lp_sums"]


def backend(name):
    """Return the kernel module called ``name`` ('cython' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = _pykernels
BACKEND = "python"
if os.environ.get("TNLS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        _impl = backend("cython")
        BACKEND = "cython"
    except ImportError:
        pass

psi_m = _impl.psi_m
dpsi_m = _impl.dpsi_m
gtilde_m = _impl.gtilde_m
g_m = _impl.g_m
gtilde_sum = _impl.gtilde_sum
lp_sums = _impl.lp_sums
