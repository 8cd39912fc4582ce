"""Kernel backend selection.

The compiled extension is used when it imports; ``CNS2D_BACKEND=python``
forces the numpy fallback.  Both backends accept the same arrays and
return new arrays.
"""
import os

import numpy as np

from . import _pykernels

_c = None
if os.environ.get("CNS2D_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _c
    except ImportError:
        _c = None

BACKEND = "cython" if _c is not None else "python"


def _as3(a):
    return a if a.ndim == 3 else a.reshape((1,) + a.shape)


class _Python:
    name = "python"
    leray_dealias = staticmethod(_pykernels.leray_dealias)
    advection = staticmethod(_pykernels.advection)

    @staticmethod
    def norm_sums(hat, ksq, weight):
        return _pykernels.norm_sums(hat, ksq, weight)

    @staticmethod
    def lawson_combine(u, a, b, c, d, e_full, e_half, dt):
        return _pykernels.lawson_combine(u, a, b, c, d, e_full, e_half, dt)


class _Cython:
    name = "cython"

    @staticmethod
    def leray_dealias(hat, k1, k2, inv_ksq, mask):
        return _c.leray_dealias(np.ascontiguousarray(hat), k1, k2, inv_ksq, mask)

    @staticmethod
    def advection(u, du):
        return _c.advection(np.ascontiguousarray(u), np.ascontiguousarray(du))

    @staticmethod
    def norm_sums(hat, ksq, weight):
        return _c.norm_sums(np.ascontiguousarray(_as3(hat)), ksq, weight)

    @staticmethod
    def lawson_combine(u, a, b, c, d, e_full, e_half, dt):
        shape = u.shape
        args = [np.ascontiguousarray(_as3(x)) for x in (u, a, b, c, d)]
        return _c.lawson_combine(*args, e_full, e_half, float(dt)).reshape(shape)


python_backend = _Python()
cython_backend = _Cython() if _c is not None else None
active = cython_backend if cython_backend is not None else python_backend


def get_backend(name=None):
    """Return a backend by name (``"python"``/``"cython"``), or the active one."""
    if name is None:
        return active
    if name == "python":
        return python_backend
    if name == "cython":
        if cython_backend is None:
            raise ImportError("compiled kernels are not built")
        return cython_backend
    raise ValueError(f"unknown backend {name!r}")
