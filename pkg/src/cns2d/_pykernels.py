"""Pure numpy implementations of the fused inner-loop kernels.

Every function here has a drop-in twin in ``_ckernels.pyx``.  Spectral
arrays use the half-spectrum layout ``(c, n, n//2 + 1)``.
"""
import numpy as np


def leray_dealias(hat, k1, k2, inv_ksq, mask):
    """Project a spectral vector onto solenoidal fields and apply the mask."""
    p = (k1 * hat[0] + k2 * hat[1]) * inv_ksq
    out = np.empty_like(hat)
    out[0] = (hat[0] - k1 * p) * mask
    out[1] = (hat[1] - k2 * p) * mask
    return out


def advection(u, du):
    """Pointwise ``(u . grad) v`` from samples ``u[i]`` and ``du[i, j] = d_i v_j``."""
    out = np.empty((2,) + u.shape[1:], dtype=np.float64)
    out[0] = u[0] * du[0, 0] + u[1] * du[1, 0]
    out[1] = u[0] * du[0, 1] + u[1] * du[1, 1]
    return out


def norm_sums(hat, ksq, weight):
    """Return the Parseval sums of |c|^2, |k|^2 |c|^2 and |k|^4 |c|^2."""
    a = (hat.real**2 + hat.imag**2) * weight
    if a.ndim == 3:
        a = a.sum(axis=0)
    s0 = float(a.sum())
    ak = a * ksq
    s1 = float(ak.sum())
    s2 = float((ak * ksq).sum())
    return s0, s1, s2


def lawson_combine(u, a, b, c, d, e_full, e_half, dt):
    """Final stage of integrating-factor RK4."""
    return e_full * (u + (dt / 6.0) * a) + (dt / 3.0) * e_half * (b + c) + (dt / 6.0) * d
