"""Scalar vorticity formulation of the constrained flow.

    d omega/dt + div(u omega) = nu Lap omega + nu ||u||_V^2 omega,

with u recovered from omega by the periodic Biot-Savart law.

Sign convention: Curl u = D1 u2 - D2 u1 throughout.  The streamfunction
relation is therefore Lap psi = omega with u = (-D2 psi, D1 psi); the
opposite pairing (Lap psi = -omega with u = (D2 psi, -D1 psi)) describes
the same map.  Either way Curl o Lambda = id.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .integrate import (
    ExponentialStepper,
    IntegratorConfig,
    TrajectoryRecord,
    BlowUp,
    constrained_stepper,
)
from .spectral import (
    AREA,
    GridSpec,
    SpectralScalar,
    SpectralVector,
    _fwd,
    _inv,
    oversampled,
    sobolev_norms,
)

MEAN_TOL = 1e-12
SUP_OVERSAMPLE = 4


class NonzeroMeanError(ValueError):
    """Biot-Savart only inverts Curl on mean-zero scalars."""


@dataclass(frozen=True)
class VorticityState:
    omega: SpectralScalar
    time: float

    def __post_init__(self):
        c = self.omega.coeffs
        scale = max(1.0, float(np.abs(c).max(initial=0.0)))
        if abs(c[0, 0]) > MEAN_TOL * scale:
            raise NonzeroMeanError(f"vorticity mean mode {c[0, 0]!r} is not zero")


# ----------------------------------------------------------- curl and Lambda


def _curl_hat(u_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    return 1j * grid.k1 * u_hat[1] - 1j * grid.k2 * u_hat[0]


def _biot_savart_hat(w_hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    psi = -w_hat * grid.inv_ksq
    return np.stack([-1j * grid.k2 * psi, 1j * grid.k1 * psi])


def curl(u: SpectralVector) -> SpectralScalar:
    return SpectralScalar(u.grid, _curl_hat(u.coeffs, u.grid))


def biot_savart(omega: SpectralScalar) -> SpectralVector:
    """Lambda: the divergence-free, mean-zero u with Curl u = omega."""
    c = omega.coeffs
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    if abs(c[0, 0]) > MEAN_TOL * scale:
        raise NonzeroMeanError(f"vorticity has nonzero mean (mode 0 = {c[0, 0]!r})")
    return SpectralVector(omega.grid, _biot_savart_hat(c, omega.grid))


def _sq(c: np.ndarray, grid: GridSpec, power: int = 0) -> float:
    """AREA * sum w |k|^(2 power) |c|^2 for a scalar spectrum."""
    wt = grid.weight if power == 0 else grid.weight * grid.ksq**power
    return AREA * float((wt * (c.real**2 + c.imag**2)).sum())


def scalar_inner(a: SpectralScalar, b: SpectralScalar) -> float:
    return AREA * float((a.grid.weight * (a.coeffs * np.conj(b.coeffs)).real).sum())


def sup_norm(c: np.ndarray, grid: GridSpec, factor: int = SUP_OVERSAMPLE) -> float:
    """Max of |f| over a ``factor``-times refined grid."""
    return float(np.abs(oversampled(c, grid.n, factor)).max())


def h2_norm(phi: SpectralScalar) -> float:
    c, g = phi.coeffs, phi.grid
    return math.sqrt(_sq(c, g, 0) + _sq(c, g, 1) + _sq(c, g, 2))


# ------------------------------------------------------------------- rhs


def _vorticity_rhs(grid: GridSpec, nu: float, v_norm=None):
    d1, d2 = grid.dk
    mask = grid.mask
    n = grid.n

    def rhs(w_hat, t=0.0):
        stack = np.empty((3,) + grid.shape, dtype=np.complex128)
        stack[0:2] = _biot_savart_hat(w_hat, grid)
        stack[2] = w_hat
        phys = _inv(stack, n)
        flux = _fwd(phys[0:2] * phys[2], n)
        div = (1j * d1 * flux[0] + 1j * d2 * flux[1]) * mask
        aux = {"u": phys[0:2], "omega": phys[2]}
        if nu == 0.0:
            return -div, aux
        v2 = _sq(w_hat, grid) if v_norm is None else float(v_norm(t)) ** 2
        return nu * v2 * w_hat - div, aux

    return rhs


def vorticity_stepper(grid: GridSpec, dt: float, nu: float, scheme: str = "if_rk4",
                      v_norm=None) -> ExponentialStepper:
    nu = float(nu)
    if nu < 0:
        raise ValueError("viscosity must be nonnegative")

    def shift(w, t=0.0):
        return nu * (_sq(w, grid) if v_norm is None else float(v_norm(t)) ** 2)
    return ExponentialStepper(-nu * grid.ksq, _vorticity_rhs(grid, nu, v_norm), dt, scheme,
                              timed=v_norm is not None, shift=shift if nu > 0 else None)


# ------------------------------------------------------------- trajectory


@dataclass
class VorticityTrajectory:
    """Strided VorticityState snapshots plus per-step scalar series.

    Behaves as a sequence of the snapshot states.
    """

    grid: GridSpec
    nu: float
    dt: float
    times: np.ndarray
    enstrophy: np.ndarray       # |omega|_{L2}^2, equal to ||u||_V^2
    palinstrophy: np.ndarray    # |grad omega|_{L2}^2
    mean: np.ndarray
    states: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def __iter__(self):
        return iter(self.states)

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])


def _as_path(v_norm_path, t0: float, dt: float):
    if v_norm_path is None or callable(v_norm_path):
        return v_norm_path
    vals = np.asarray(v_norm_path, dtype=np.float64)
    ts = t0 + dt * np.arange(len(vals))
    return CubicSpline(ts, vals)


def integrate_vorticity(omega0: SpectralScalar, cfg: IntegratorConfig, nu: float = 1.0,
                        v_norm_path=None, t0: float = 0.0, scheme: str | None = None) -> VorticityTrajectory:
    """Evolve omega0 with the linear part nu Lap treated exactly.

    ``v_norm_path`` optionally replaces the self-computed ||u||_V by an
    external path: a callable of t, or values at the step times (cubic
    interpolation supplies the stage times).
    """
    grid = omega0.grid
    VorticityState(omega0, t0)
    scheme = cfg.scheme if scheme is None else scheme
    steps = cfg.n_steps
    stride = int(cfg.snapshot_stride)
    stepper = vorticity_stepper(grid, cfg.dt, nu, scheme, _as_path(v_norm_path, t0, cfg.dt))
    w = np.array(omega0.coeffs, dtype=np.complex128)
    times, ens, pal, mean, states = [], [], [], [], []
    for k in range(steps + 1):
        t = t0 + k * cfg.dt
        times.append(t)
        ens.append(_sq(w, grid, 0))
        pal.append(_sq(w, grid, 1))
        mean.append(abs(w[0, 0]))
        if k % stride == 0 or k == steps:
            states.append(VorticityState(SpectralScalar(grid, w.copy()), t))
        if k == steps:
            break
        w = stepper.step(w, None, t)
        if not np.isfinite(w).all():
            raise BlowUp(f"non-finite vorticity at t={t + cfg.dt:.6g}")
    return VorticityTrajectory(grid, float(nu), cfg.dt, np.array(times), np.array(ens), np.array(pal),
                               np.array(mean), states)


def vorticity_from_velocity(traj: TrajectoryRecord) -> VorticityTrajectory:
    """Vorticity view of a velocity run; |omega|^2 = v^2 and |grad omega|^2 = e^2."""
    states = [VorticityState(curl(u), float(t)) for t, u in zip(traj.snapshot_times, traj.snapshots)]
    v, e = traj.column("v_norm"), traj.column("e_norm")
    return VorticityTrajectory(traj.grid, traj.nu, traj.dt, traj.times.copy(), v * v, e * e,
                               np.array([abs(st.omega.coeffs[0, 0]) for st in states]), states)


# ------------------------------------------------------------ cross check


def cross_check_forms(u0: SpectralVector, cfg: IntegratorConfig, nu: float = 1.0,
                      vorticity_scheme: str = "etd_rk4") -> float:
    """sup_t |curl u_vel(t) - omega_vor(t)|_{L2} over every step.

    Both dealiased systems are the same Galerkin ODE, so stepping them with
    one scheme only measures roundoff.  The vorticity run therefore uses
    ``vorticity_scheme`` (a different fourth-order method by default) and
    the result is the sum of two independent time-discretization errors.
    """
    grid = u0.grid
    vel = constrained_stepper(grid, cfg.dt, nu, cfg.scheme)
    vor = vorticity_stepper(grid, cfg.dt, nu, vorticity_scheme)
    y = np.array(u0.coeffs, dtype=np.complex128)
    w = _curl_hat(y, grid)
    worst = 0.0
    for k in range(cfg.n_steps + 1):
        worst = max(worst, math.sqrt(_sq(_curl_hat(y, grid) - w, grid)))
        if k == cfg.n_steps:
            break
        y = vel.step(y)
        w = vor.step(w)
        if not (np.isfinite(y).all() and np.isfinite(w).all()):
            raise BlowUp("non-finite state in form cross-check")
    return worst


# ----------------------------------------------------- maximum principle


@dataclass(frozen=True)
class MaxPrincipleReport:
    sup_omega: float
    omega0_linf: float
    linf_bound: float
    linf_margin: float
    budget_lhs: float
    budget_rhs: float
    budget_margin: float
    slack: float

    @property
    def linf_holds(self) -> bool:
        return self.sup_omega <= self.linf_bound * (1.0 + self.slack)

    @property
    def budget_holds(self) -> bool:
        return self.budget_lhs <= self.budget_rhs * (1.0 + self.slack)

    @property
    def passed(self) -> bool:
        return self.linf_holds and self.budget_holds


def max_principle_check(traj: VorticityTrajectory, u0_vnorm: float, nu: float, T: float,
                        slack: float = 1e-6) -> MaxPrincipleReport:
    """Sup-norm growth bound and the enstrophy-gradient budget on a run.

    Sup norms are taken on a 4x refined synthesis of each snapshot; the
    gradient integral uses the per-step series and the trapezoid rule.
    """
    g = traj.grid
    w0 = traj.states[0].omega.coeffs
    linf0 = sup_norm(w0, g)
    sup = max(sup_norm(s.omega.coeffs, g) for s in traj.states)
    a = nu * u0_vnorm**2 * T
    bound = linf0 * math.exp(a)
    mask = traj.times <= traj.times[0] + T * (1 + 1e-12)
    ts, pal = traj.times[mask], traj.palinstrophy[mask]
    lhs = nu * float(np.sum(0.5 * (pal[1:] + pal[:-1]) * np.diff(ts)))
    rhs = 0.5 * _sq(w0, g) + a * linf0**2 * math.exp(2 * a)
    return MaxPrincipleReport(sup, linf0, bound, bound - sup, lhs, rhs, rhs - lhs, slack)


# -------------------------------------------------------- weak formulation


@dataclass(frozen=True)
class WeakFormResult:
    residual: float
    equicontinuity_ratio: float
    equicontinuity_bound: float

    @property
    def equicontinuity_holds(self) -> bool:
        return self.equicontinuity_ratio <= 1.1 * self.equicontinuity_bound


def _advective_pairing(w_hat: np.ndarray, grad_phi: np.ndarray, grid: GridSpec) -> float:
    """<u omega, grad phi> with the product's retained modes only."""
    stack = np.empty((3,) + grid.shape, dtype=np.complex128)
    stack[0:2] = _biot_savart_hat(w_hat, grid)
    stack[2] = w_hat
    phys = _inv(stack, grid.n)
    flux = _fwd(phys[0:2] * phys[2], grid.n) * grid.mask
    return AREA * float((grid.weight * (flux * np.conj(grad_phi)).real).sum())


def weak_form_residual(traj: VorticityTrajectory, phi: SpectralScalar, t: float,
                       s: float | None = None) -> WeakFormResult:
    """Residual of the time-independent-phi weak identity on [t0, t].

    <omega(t), phi> - <omega0, phi> - int <u omega, grad phi>
        - nu int (<omega, Lap phi> + ||u||_V^2 <omega, phi>) = 0,

    integrated by the trapezoid rule over the stored snapshots.  phi is
    restricted to the dealiasing band, where the Galerkin identity is exact.
    The equicontinuity ratio <omega(t) - omega(s), phi> / ((t - s)|phi|_H2)
    is returned with its bound, taking s = t0 unless given.
    """
    g = traj.grid
    pc = phi.coeffs * g.mask
    grad_phi = np.stack([1j * g.k1 * pc, 1j * g.k2 * pc])
    lap_phi = -g.ksq * pc
    nu = traj.nu
    ts = traj.snapshot_times
    sel = [i for i, tt in enumerate(ts) if tt <= t * (1 + 1e-12) + 1e-14]
    if not sel or abs(ts[sel[-1]] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not a recorded snapshot time")

    def pair(a, b):
        return AREA * float((g.weight * (a * np.conj(b)).real).sum())

    integrand = []
    for i in sel:
        w = traj.states[i].omega.coeffs
        val = _advective_pairing(w, grad_phi, g)
        if nu:
            val += nu * (pair(w, lap_phi) + _sq(w, g) * pair(w, pc))
        integrand.append(val)
    integrand = np.array(integrand)
    tt = ts[sel]
    integral = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(tt))) if len(sel) > 1 else 0.0
    w0 = traj.states[0].omega.coeffs
    wt = traj.states[sel[-1]].omega.coeffs
    residual = pair(wt, pc) - pair(w0, pc) - integral

    s = ts[0] if s is None else s
    js = int(np.argmin(np.abs(ts - s)))
    ws = traj.states[js].omega.coeffs
    span = t - ts[js]
    hn = h2_norm(SpectralScalar(g, pc))
    ratio = abs(pair(wt, pc) - pair(ws, pc)) / (span * hn) if span > 0 and hn > 0 else 0.0
    v0 = math.sqrt(_sq(w0, g))
    sup = max(sup_norm(st.omega.coeffs, g) for st in traj.states)
    bound = sup + 2 * nu * v0 * (1 + v0 * v0)
    return WeakFormResult(residual, ratio, bound)


# ------------------------------------------------------- elliptic estimates


def ellreg1_ratio(u: SpectralVector) -> float:
    """||Lap u||_{L2} / ||grad Curl u||_{L2}; exactly 1 for divergence-free u."""
    lap = math.sqrt(AREA * float((u.grid.weight * u.grid.ksq**2 * (np.abs(u.coeffs) ** 2).sum(axis=0)).sum()))
    gc = math.sqrt(_sq(_curl_hat(u.coeffs, u.grid), u.grid, 1))
    return lap / gc if gc > 0 else 0.0


def ellreg2_ratio(u: SpectralVector, p: float, factor: int = 2) -> float:
    """||grad u||_{L^p} / |Curl u|_{L^inf} with |grad u| the Frobenius norm."""
    g = u.grid
    grads = np.stack([1j * g.k1 * u.coeffs, 1j * g.k2 * u.coeffs])
    phys = oversampled(grads, g.n, factor)
    frob = np.sqrt((phys**2).sum(axis=(0, 1)))
    big = g.n * factor
    lp = (float((frob**p).sum()) * AREA / big**2) ** (1.0 / p)
    winf = sup_norm(_curl_hat(u.coeffs, g), g, factor)
    return lp / winf if winf > 0 else 0.0


def velocity_vnorm(u: SpectralVector) -> float:
    return sobolev_norms(u).v
