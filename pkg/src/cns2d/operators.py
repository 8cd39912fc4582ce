"""Continuous operators on the torus: Leray projection, Stokes operator, heat
semigroup, the Navier-Stokes nonlinearity and the manifold geometry of the
unit L2 sphere in H.
"""
from __future__ import annotations

import numpy as np

from .kernels import active as _kern
from .spectral import (
    SpectralVector,
    _fwd,
    _inv,
    inner,
    sobolev_norms,
    vector_gradient,
)

MANIFOLD_TOL = 1e-8


class OffManifoldError(ValueError):
    """Raised when a tangent operation receives u with |u|_H far from 1."""


def _check_nu(nu: float) -> float:
    nu = float(nu)
    if nu < 0:
        raise ValueError(f"viscosity must be nonnegative, got {nu}")
    return nu


def _check_on_manifold(u: SpectralVector) -> None:
    h = sobolev_norms(u).h
    if abs(h - 1.0) > MANIFOLD_TOL:
        raise OffManifoldError(f"|u|_H = {h!r} is off the unit sphere by more than {MANIFOLD_TOL}")


def leray_project(v: SpectralVector) -> SpectralVector:
    g = v.grid
    return SpectralVector(g, _kern.leray_dealias(v.coeffs, g.k1, g.k2, g.inv_ksq, g.ones))


def stokes_apply(u: SpectralVector) -> SpectralVector:
    return SpectralVector(u.grid, u.coeffs * u.grid.ksq)


def heat_semigroup(u: SpectralVector, t: float, nu: float = 1.0) -> SpectralVector:
    """S(t)u: multiply mode k by exp(-nu t |k|^2)."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    nu = _check_nu(nu)
    return SpectralVector(u.grid, u.coeffs * np.exp(-nu * t * u.grid.ksq))


# ------------------------------------------------------------ nonlinearity


def advect(u_hat: np.ndarray, v_hat: np.ndarray, grid, dealias: bool = True):
    """Pseudo-spectral Pi[(u.grad) v] on raw half-spectrum arrays.

    Returns the projected spectral result together with the physical
    samples of u and of grad v, which callers reuse for diagnostics.
    """
    n = grid.n
    d1, d2 = grid.dk
    stack = np.empty((6,) + grid.shape, dtype=np.complex128)
    stack[0:2] = u_hat
    stack[2:4] = 1j * d1 * v_hat
    stack[4:6] = 1j * d2 * v_hat
    phys = _inv(stack, n)
    u = phys[0:2]
    dv = phys[2:6].reshape(2, 2, n, n)
    prod = _kern.advection(u, dv)
    mask = grid.mask if dealias else grid.ones
    out = _kern.leray_dealias(_fwd(prod, n), grid.k1, grid.k2, grid.inv_ksq, mask)
    return out, u, dv


def bilinear_b(u: SpectralVector, v: SpectralVector, dealias: bool = True) -> SpectralVector:
    """B(u, v) = Pi[(u.grad) v], evaluated pseudo-spectrally with the 2/3 rule."""
    if u.grid != v.grid:
        raise ValueError("grid mismatch between u and v")
    out, _, _ = advect(u.coeffs, v.coeffs, u.grid, dealias=dealias)
    return SpectralVector(u.grid, out)


def trilinear_b(u: SpectralVector, v: SpectralVector, w: SpectralVector) -> float:
    """b(u, v, w) = sum_ij int u_i d_i v_j w_j dx by grid quadrature."""
    if not (u.grid == v.grid == w.grid):
        raise ValueError("grid mismatch")
    n = u.grid.n
    up = _inv(u.coeffs, n)
    wp = _inv(w.coeffs, n)
    dv = _inv(vector_gradient(v), n)
    integrand = np.einsum("ixy,ijxy,jxy->xy", up, dv, wp)
    return float(integrand.sum() * (2.0 * np.pi / n) ** 2)


def g1_constraint(u: SpectralVector) -> SpectralVector:
    """Lagrange-multiplier term |grad u|^2 u."""
    return u * sobolev_norms(u).v ** 2


def g_total(u: SpectralVector, nu: float = 1.0) -> SpectralVector:
    """nu G1(u) - B(u, u); with nu = 1 this is G(u) = |grad u|^2 u - B(u, u)."""
    nu = _check_nu(nu)
    b = bilinear_b(u, u)
    if nu == 0.0:
        return -b
    return g1_constraint(u) * nu - b


# ------------------------------------------------------- manifold geometry


def tangent_project(u: SpectralVector, v: SpectralVector) -> SpectralVector:
    """pi_u(v) = v - <v, u> u for u on the unit sphere."""
    _check_on_manifold(u)
    return v - u * inner(v, u)


def manifold_gradient(u: SpectralVector) -> SpectralVector:
    """Gradient of the Dirichlet energy projected onto T_u M: Au - |grad u|^2 u."""
    _check_on_manifold(u)
    return stokes_apply(u) - g1_constraint(u)
