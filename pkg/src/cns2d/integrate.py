"""Exponential time steppers for the constrained Navier-Stokes flow

    du/dt = -nu A u + nu |grad u|^2 u - B(u, u),

its Euler limit (nu = 0), trajectory recording and the X_T norm.

The linear part is diagonal in Fourier space and is always applied
through exact exponential factors; the nonlinearity is explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import active as _kern
from .operators import advect
from .spectral import AREA, GridSpec, SpectralVector, sobolev_norms

SCHEMES = ("if_rk4", "etd_rk2", "etd_rk4")
RENORMALIZE = ("off", "every_step", "monitor_only")
DRIFT_ABORT = 1e-3
ON_MANIFOLD_TOL = 1e-10

DIAGNOSTIC_COLUMNS = (
    "t",
    "h_norm",
    "v_norm",
    "e_norm",
    "constraint_residual",
    "dissipation",
    "b_u_ortho",
    "b_au_ortho",
    "omega_linf",
    "cfl_number",
)


class IntegrationAbort(RuntimeError):
    """A run stopped early; ``trajectory`` holds everything recorded so far."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class CFLViolation(IntegrationAbort):
    pass


class BlowUp(IntegrationAbort):
    pass


class ConstraintDrift(IntegrationAbort):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    horizon: float
    scheme: str = "if_rk4"
    renormalize: str = "monitor_only"
    snapshot_stride: int = 1
    check_cfl: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.dt < self.horizon:
            raise ValueError("dt must be smaller than the horizon")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.renormalize not in RENORMALIZE:
            raise ValueError(f"unknown renormalize policy {self.renormalize!r}; choose from {RENORMALIZE}")
        if int(self.snapshot_stride) < 1:
            raise ValueError("snapshot_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        steps = round(self.horizon / self.dt)
        if abs(steps * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ValueError(f"horizon {self.horizon} is not an integer multiple of dt {self.dt}")
        return int(steps)


@dataclass
class TrajectoryRecord:
    """Time series of diagnostics (every step) and strided snapshots."""

    grid: GridSpec
    nu: float
    dt: float
    rows: np.ndarray
    snapshot_times: np.ndarray
    snapshots: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.rows[:, 0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, DIAGNOSTIC_COLUMNS.index(name)]

    @property
    def final(self) -> SpectralVector:
        return self.snapshots[-1]

    def snapshot_at(self, t: float, tol: float = 1e-12) -> SpectralVector:
        i = int(np.argmin(np.abs(self.snapshot_times - t)))
        if abs(self.snapshot_times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot recorded at t={t}")
        return self.snapshots[i]


# ------------------------------------------------------------ phi functions


def phi_contour(z: np.ndarray, kinds=("phi1", "phi2"), points: int = 32) -> dict:
    """Exponential-integrator coefficients by contour averaging around each z.

    The contour mean stays accurate where the closed forms cancel (z -> 0).
    """
    r = np.exp(2j * np.pi * (np.arange(1, points + 1) - 0.5) / points)
    c = z[..., None] + r
    ec = np.exp(c)
    formulas = {
        "phi1": lambda: (ec - 1.0) / c,
        "phi2": lambda: (ec - 1.0 - c) / c**2,
        "half1": lambda: (np.exp(c / 2) - 1.0) / c,
        "f1": lambda: (-4.0 - c + ec * (4.0 - 3.0 * c + c**2)) / c**3,
        "f2": lambda: (2.0 + c + ec * (-2.0 + c)) / c**3,
        "f3": lambda: (-4.0 - 3.0 * c - c**2 + ec * (4.0 - c)) / c**3,
    }
    return {k: formulas[k]().mean(axis=-1).real for k in kinds}


# ----------------------------------------------------------------- stepper


class ExponentialStepper:
    """One step of ``dy/dt = lin * y + N(y)`` with ``lin`` diagonal and real.

    ``rhs(y)`` returns ``(N(y), aux)``; ``step`` optionally accepts the
    already-evaluated first stage so callers can reuse it for diagnostics.
    With ``timed=True`` the right side is called as ``rhs(y, t)`` at the
    stage times and ``step`` needs the step start time.

    ``shift(y, t)`` (if_rk4 only) returns a scalar c moved from N into the
    linear part for the step, lin' = lin + c and N' = N - c y.  With c the
    multiplier of the constraint term, normalized eigenfields become exact
    fixed points of the discrete step.
    """

    def __init__(self, lin: np.ndarray, rhs, dt: float, scheme: str = "if_rk4", timed: bool = False,
                 shift=None):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.timed = timed
        self.shift = shift if scheme == "if_rk4" else None
        self._rhs = rhs
        self.dt = float(dt)
        self.scheme = scheme
        z = lin * self.dt
        self.e_full = np.exp(z)
        self.e_half = np.exp(0.5 * z)
        if scheme == "etd_rk2":
            phi = phi_contour(z, ("phi1", "phi2"))
            self.w1 = self.dt * phi["phi1"]
            self.w2 = self.dt * phi["phi2"]
        elif scheme == "etd_rk4":
            phi = phi_contour(z, ("half1", "f1", "f2", "f3"))
            self.q = self.dt * phi["half1"]
            self.f1 = self.dt * phi["f1"]
            self.f2 = self.dt * phi["f2"]
            self.f3 = self.dt * phi["f3"]

    def rhs(self, y, t=0.0):
        return self._rhs(y, t) if self.timed else self._rhs(y)

    def step(self, y: np.ndarray, first=None, t: float = 0.0) -> np.ndarray:
        dt = self.dt
        th, t1 = t + 0.5 * dt, t + dt
        na = self.rhs(y, t)[0] if first is None else first
        if self.scheme == "if_rk4":
            if self.shift is None:
                return self._lawson(y, na, self.e_half, self.e_full, t, lambda x, tt: self.rhs(x, tt)[0])
            c = float(self.shift(y, t))
            g = math.exp(0.5 * c * dt)
            return self._lawson(y, na - c * y, self.e_half * g, self.e_full * (g * g), t,
                                lambda x, tt: self.rhs(x, tt)[0] - c * x)
        if self.scheme == "etd_rk2":
            a = self.e_full * y + self.w1 * na
            nb = self.rhs(a, t1)[0]
            return a + self.w2 * (nb - na)
        eh, q = self.e_half, self.q
        a = eh * y + q * na
        nb = self.rhs(a, th)[0]
        b = eh * y + q * nb
        nc = self.rhs(b, th)[0]
        c = eh * a + q * (2.0 * nc - na)
        nd = self.rhs(c, t1)[0]
        return self.e_full * y + self.f1 * na + 2.0 * self.f2 * (nb + nc) + self.f3 * nd

    def _lawson(self, y, na, eh, ef, t, N):
        dt = self.dt
        th, t1 = t + 0.5 * dt, t + dt
        nb = N(eh * (y + 0.5 * dt * na), th)
        nc = N(eh * y + 0.5 * dt * nb, th)
        nd = N(ef * y + dt * eh * nc, t1)
        return _kern.lawson_combine(y, na, nb, nc, nd, ef, eh, dt)


def _velocity_rhs(grid: GridSpec, nu: float):
    weight, ksq = grid.weight, grid.ksq

    def rhs(u_hat):
        b_hat, u_phys, du = advect(u_hat, u_hat, grid)
        aux = {"b": b_hat, "u": u_phys, "du": du}
        if nu == 0.0:
            return -b_hat, aux
        s1 = _kern.norm_sums(u_hat, ksq, weight)[1]
        return (nu * AREA * s1) * u_hat - b_hat, aux

    return rhs


def constrained_stepper(grid: GridSpec, dt: float, nu: float, scheme: str = "if_rk4") -> ExponentialStepper:
    nu = float(nu)
    if nu < 0:
        raise ValueError("viscosity must be nonnegative")

    def shift(y, t=0.0):
        return nu * AREA * _kern.norm_sums(y, grid.ksq, grid.weight)[1]
    return ExponentialStepper(-nu * grid.ksq, _velocity_rhs(grid, nu), dt, scheme,
                              shift=shift if nu > 0 else None)


def step_constrained_ns(u: SpectralVector, dt: float, nu: float = 1.0, scheme: str = "if_rk4",
                        check_cfl: bool = True) -> SpectralVector:
    """Advance u by one step of the chosen exponential scheme."""
    stepper = constrained_stepper(u.grid, dt, nu, scheme)
    first, aux = stepper.rhs(u.coeffs)
    if check_cfl:
        cfl = dt * float(np.abs(aux["u"]).max()) * u.grid.n / 2
        if cfl > 1.0:
            raise CFLViolation(f"advective CFL number {cfl:.3g} exceeds 1; reduce dt")
    out = stepper.step(u.coeffs, first)
    if not np.isfinite(out).all():
        raise BlowUp("non-finite coefficients after step")
    return SpectralVector(u.grid, out)


def step_euler(u: SpectralVector, dt: float, scheme: str = "if_rk4") -> SpectralVector:
    return step_constrained_ns(u, dt, 0.0, scheme)


# ----------------------------------------------------------- diagnostics row


def _ratio(num: float, den: float) -> float:
    return abs(num) / den if den > 0 else 0.0


def diagnostics_row(t: float, u_hat: np.ndarray, aux: dict, grid: GridSpec, dt: float) -> list:
    """One DiagnosticsRow from the state and the first-stage byproducts."""
    w, ksq = grid.weight, grid.ksq
    s0, s1, s2 = _kern.norm_sums(u_hat, ksq, w)
    h, v, e = math.sqrt(AREA * s0), math.sqrt(AREA * s1), math.sqrt(AREA * s2)
    b = aux["b"]
    bb = AREA * _kern.norm_sums(b, ksq, w)[0]
    bu = AREA * float(((b * np.conj(u_hat)).real * w).sum())
    bau = AREA * float(((b * np.conj(u_hat)).real * (w * ksq)).sum())
    du = aux["du"]
    omega = du[0, 1] - du[1, 0]
    umax = float(np.sqrt(aux["u"][0] ** 2 + aux["u"][1] ** 2).max())
    # |B| <= |u|_inf ||u||_V; the bound is the scale when B itself vanishes
    bnorm = max(math.sqrt(bb), umax * v)
    return [
        t,
        h,
        v,
        e,
        h - 1.0,
        e * e - v**4,
        _ratio(bu, bnorm * h),
        _ratio(bau, bnorm * e),
        float(np.abs(omega).max()),
        dt * umax * grid.n / 2,
    ]


# ---------------------------------------------------------------- integrate


def integrate(u0: SpectralVector, cfg: IntegratorConfig, nu: float = 1.0, t0: float = 0.0,
              require_on_manifold: bool = True) -> TrajectoryRecord:
    """Integrate from u0 over [t0, t0 + horizon], recording every step."""
    grid = u0.grid
    nu = float(nu)
    h0 = sobolev_norms(u0).h
    if require_on_manifold and abs(h0 - 1.0) > ON_MANIFOLD_TOL:
        raise ValueError(f"|u0|_H = {h0!r}; use project_to_manifold first")
    steps = cfg.n_steps
    stride = int(cfg.snapshot_stride)
    stepper = constrained_stepper(grid, cfg.dt, nu, cfg.scheme)
    rows = []
    snap_t, snaps = [], []
    y = np.array(u0.coeffs, dtype=np.complex128)

    def record(reason=None):
        traj = TrajectoryRecord(grid, nu, cfg.dt, np.array(rows, dtype=np.float64).reshape(-1, len(DIAGNOSTIC_COLUMNS)),
                                np.array(snap_t), list(snaps))
        return traj

    for k in range(steps + 1):
        t = t0 + k * cfg.dt
        first, aux = stepper.rhs(y)
        row = diagnostics_row(t, y, aux, grid, cfg.dt)
        rows.append(row)
        if k % stride == 0 or k == steps:
            snap_t.append(t)
            snaps.append(SpectralVector(grid, y.copy()))
        if cfg.check_cfl and row[-1] > 1.0:
            raise CFLViolation(f"advective CFL number {row[-1]:.3g} exceeds 1 at t={t:.6g}; reduce dt", record())
        if k == steps:
            break
        y = stepper.step(y, first)
        if not np.isfinite(y).all():
            raise BlowUp(f"non-finite coefficients at t={t + cfg.dt:.6g}", record())
        if cfg.renormalize != "off":
            h = math.sqrt(AREA * _kern.norm_sums(y, grid.ksq, grid.weight)[0])
            if cfg.renormalize == "every_step":
                y = y / h
            elif abs(h - 1.0) > DRIFT_ABORT:
                raise ConstraintDrift(f"|u|_H - 1 = {h - 1.0:.3e} at t={t + cfg.dt:.6g}", record())
    return record()


def integrate_euler(u0: SpectralVector, cfg: IntegratorConfig, t0: float = 0.0) -> TrajectoryRecord:
    """The nu = 0 limit equation du/dt = -B(u, u)."""
    return integrate(u0, cfg, 0.0, t0)


# -------------------------------------------------------------- functionals


def _trapezoid_cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def xt_norm(traj: TrajectoryRecord, t: float, squared: bool = True) -> float:
    """|u|_{X_t}^2 = sup_{s<=t} ||u(s)||_V^2 + int_0^t |u(s)|_E^2 ds over recorded rows."""
    times = traj.times
    if t < times[0] - 1e-12 or t > times[-1] * (1 + 1e-12) + 1e-12:
        raise ValueError(f"t={t} outside the trajectory span [{times[0]}, {times[-1]}]")
    v2 = traj.column("v_norm") ** 2
    e2 = traj.column("e_norm") ** 2
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = max(0, min(j, len(times) - 1))
    sup = float(v2[: j + 1].max())
    integral = float(_trapezoid_cumulative(e2[: j + 1], times[: j + 1])[-1])
    if t > times[j] and j + 1 < len(times):
        frac = (t - times[j]) / (times[j + 1] - times[j])
        v2t = v2[j] + frac * (v2[j + 1] - v2[j])
        e2t = e2[j] + frac * (e2[j + 1] - e2[j])
        sup = max(sup, float(v2t))
        integral += 0.5 * (e2[j] + e2t) * (t - times[j])
    value = sup + integral
    return value if squared else math.sqrt(value)


def energy_identity_residual(traj: TrajectoryRecord) -> np.ndarray:
    """Per-row residual of 1/2 v(t)^2 + nu int (e^2 - v^4) ds - 1/2 v(0)^2."""
    v = traj.column("v_norm")
    e = traj.column("e_norm")
    diss = e * e - v**4
    return 0.5 * v * v + traj.nu * _trapezoid_cumulative(diss, traj.times) - 0.5 * v[0] ** 2
