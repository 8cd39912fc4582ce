"""Pseudo-spectral solver and invariant checks for the 2-D Navier-Stokes flow
constrained to the unit L2 sphere on the periodic torus."""
from .integrate import IntegratorConfig, TrajectoryRecord, integrate, integrate_euler, xt_norm
from .kernels import BACKEND
from .operators import bilinear_b, heat_semigroup, leray_project, stokes_apply
from .spectral import (
    GridSpec,
    SpectralScalar,
    SpectralVector,
    random_smooth_field,
    sobolev_norms,
    taylor_green,
)
from .vorticity import biot_savart, curl, integrate_vorticity

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GridSpec",
    "IntegratorConfig",
    "SpectralScalar",
    "SpectralVector",
    "TrajectoryRecord",
    "bilinear_b",
    "biot_savart",
    "curl",
    "heat_semigroup",
    "integrate",
    "integrate_euler",
    "integrate_vorticity",
    "leray_project",
    "random_smooth_field",
    "sobolev_norms",
    "stokes_apply",
    "taylor_green",
    "xt_norm",
]
