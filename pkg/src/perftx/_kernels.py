"""Select the kernel core at import: compiled extension when built, numpy otherwise.

Set ``PERFTX_PURE=1`` to force the numpy core.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("PERFTX_PURE"):
    _ext = None
else:
    try:
        from . import _kernels_ext as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "numpy"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def get_backend(name=None):
    """Return the core module called ``name`` ("cython" or "numpy")."""
    name = name or BACKEND
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        if _ext is None:
            raise ImportError("compiled kernel core is not available")
        return _ext
    raise ValueError(f"unknown kernel backend {name!r}")


if _ext is not None:

    def se_cross(X1, X2, inv_ls):
        return _ext.se_cross(_c(X1), _c(X2), _c(inv_ls))

    def se_gram(X, inv_ls):
        return _ext.se_gram(_c(X), _c(inv_ls))

    def weighted_sqdist_sums(M, X):
        return _ext.weighted_sqdist_sums(_c(M), _c(X))

else:
    se_cross = _kernels_py.se_cross
    se_gram = _kernels_py.se_gram
    weighted_sqdist_sums = _kernels_py.weighted_sqdist_sums
