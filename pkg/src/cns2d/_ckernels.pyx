# cython: language_level=3
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport cython


def leray_dealias(const double complex[:, :, ::1] hat, const double[:, ::1] k1,
                  const double[:, ::1] k2, const double[:, ::1] inv_ksq,
                  const double[:, ::1] mask):
    cdef Py_ssize_t n = hat.shape[1], m = hat.shape[2], i, j
    cdef double a, b, ms, pr, pi, ar, ai, br, bi
    out = np.empty((2, n, m), dtype=np.complex128)
    cdef double complex[:, :, ::1] o = out
    # real arithmetic throughout: complex-by-real products are otherwise full complex multiplies
    for i in range(n):
        for j in range(m):
            a = k1[i, j]
            b = k2[i, j]
            ms = mask[i, j]
            ar = hat[0, i, j].real
            ai = hat[0, i, j].imag
            br = hat[1, i, j].real
            bi = hat[1, i, j].imag
            pr = (a * ar + b * br) * inv_ksq[i, j]
            pi = (a * ai + b * bi) * inv_ksq[i, j]
            o[0, i, j].real = (ar - a * pr) * ms
            o[0, i, j].imag = (ai - a * pi) * ms
            o[1, i, j].real = (br - b * pr) * ms
            o[1, i, j].imag = (bi - b * pi) * ms
    return out


def advection(const double[:, :, ::1] u, const double[:, :, :, ::1] du):
    cdef Py_ssize_t n0 = u.shape[1], n1 = u.shape[2], i, j
    out = np.empty((2, n0, n1), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double a, b
    for i in range(n0):
        for j in range(n1):
            a = u[0, i, j]
            b = u[1, i, j]
            o[0, i, j] = a * du[0, 0, i, j] + b * du[1, 0, i, j]
            o[1, i, j] = a * du[0, 1, i, j] + b * du[1, 1, i, j]
    return out


def norm_sums(const double complex[:, :, ::1] hat, const double[:, ::1] ksq,
              const double[:, ::1] weight):
    cdef Py_ssize_t c = hat.shape[0], n = hat.shape[1], m = hat.shape[2], q, i, j
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, a, kk
    cdef double complex z
    for i in range(n):
        for j in range(m):
            a = 0.0
            for q in range(c):
                z = hat[q, i, j]
                a += z.real * z.real + z.imag * z.imag
            a *= weight[i, j]
            kk = ksq[i, j]
            s0 += a
            s1 += a * kk
            s2 += a * kk * kk
    return s0, s1, s2


def lawson_combine(const double complex[:, :, ::1] u, const double complex[:, :, ::1] a,
                   const double complex[:, :, ::1] b, const double complex[:, :, ::1] c,
                   const double complex[:, :, ::1] d, const double[:, ::1] e_full,
                   const double[:, ::1] e_half, double dt):
    cdef Py_ssize_t nc = u.shape[0], n = u.shape[1], m = u.shape[2], q, i, j
    cdef double h6 = dt / 6.0, h3 = dt / 3.0
    out = np.empty((nc, n, m), dtype=np.complex128)
    cdef double complex[:, :, ::1] o = out
    for q in range(nc):
        for i in range(n):
            for j in range(m):
                o[q, i, j] = (e_full[i, j] * (u[q, i, j] + h6 * a[q, i, j])
                              + h3 * e_half[i, j] * (b[q, i, j] + c[q, i, j])
                              + h6 * d[q, i, j])
    return out
