"""Invariant checks producing pass/fail reports with signed margins.

Inequalities with explicit constants are asserted directly; those with
unspecified constants are checked for finiteness and for stability of the
empirical constant across resolutions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .integrate import IntegratorConfig, TrajectoryRecord, _trapezoid_cumulative, energy_identity_residual, integrate
from .operators import bilinear_b, stokes_apply, trilinear_b
from .picard import k_constant, theta, theta_prime
from .spectral import (
    AREA,
    GridSpec,
    SpectralScalar,
    SpectralVector,
    _hermitize,
    inner,
    l2_norm,
    oversampled,
    random_smooth_field,
    sobolev_norms,
    taylor_green,
)
from .vorticity import (
    biot_savart,
    curl,
    ellreg1_ratio,
    ellreg2_ratio,
    max_principle_check,
    vorticity_from_velocity,
    weak_form_residual,
)

ORTHO_TOL = 1e-11
EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    margin: float
    witness: str
    tolerance: float

    def as_dict(self) -> dict:
        return asdict(self)


def _report(name, value, limit, witness, tolerance=0.0) -> CheckReport:
    """Pass iff value <= limit + tolerance; margin = limit - value."""
    margin = float(limit - value)
    return CheckReport(name, bool(margin >= -tolerance), margin, witness, float(tolerance))


def _stability(name, a, b, rel, witness) -> CheckReport:
    spread = abs(a - b) / max(abs(a), abs(b), 1e-300)
    ok = math.isfinite(a) and math.isfinite(b) and spread <= rel
    return CheckReport(name, bool(ok), float(rel - spread), witness, float(rel))


# ---------------------------------------------------------- orthogonality


def _l4(u: SpectralVector, factor: int = 2) -> float:
    phys = oversampled(u.coeffs, u.grid.n, factor)
    big = u.grid.n * factor
    return (float(((phys**2).sum(axis=0) ** 2).sum()) * AREA / big**2) ** 0.25


def _grad_l4(u: SpectralVector, factor: int = 2) -> float:
    g = u.grid
    grads = np.stack([1j * g.k1 * u.coeffs, 1j * g.k2 * u.coeffs])
    phys = oversampled(grads, g.n, factor)
    big = g.n * factor
    return (float(((phys**2).sum(axis=(0, 1)) ** 2).sum()) * AREA / big**2) ** 0.25


def check_orthogonality_suite(u: SpectralVector, w: SpectralVector | None = None,
                              dealias: bool = True, label: str = "") -> list:
    """The four cancellation identities of the nonlinearity, relative to their scales."""
    g = u.grid
    if w is None:
        w = random_smooth_field(12345, 2.5, g)
    b = bilinear_b(u, u, dealias=dealias)
    au = stokes_apply(u)
    nu_, nau = l2_norm(u), l2_norm(au)
    # B can vanish (eigenfields); measure it against its Hoelder scale instead
    nb = max(l2_norm(b), _l4(u) * _grad_l4(u))
    tag = f" [{label}]" if label else ""
    out = []
    out.append(_report("b_u_u_orthogonal", abs(inner(b, u)) / max(nb * nu_, 1e-300), ORTHO_TOL,
                       f"<B(u,u),u>{tag}"))
    out.append(_report("b_au_orthogonal", abs(inner(b, au)) / max(nb * nau, 1e-300), ORTHO_TOL,
                       f"<B(u,u),Au>{tag}"))
    if dealias:
        buww = trilinear_b(u, w, w)
    else:
        buww = inner(bilinear_b(u, w, dealias=False), w)
    scale = _l4(u) * sobolev_norms(w).v * _l4(w)
    out.append(_report("b_u_w_w_vanishes", abs(buww) / max(scale, 1e-300), ORTHO_TOL, f"b(u,w,w){tag}"))
    rhs = au * -1.0 + u * sobolev_norms(u).v ** 2 - b
    scale = (nau + sobolev_norms(u).v ** 2 * nu_ + nb) * nu_
    out.append(_report("tangent_rhs_orthogonal", abs(inner(rhs, u)) / max(scale, 1e-300), ORTHO_TOL,
                       f"<-Au+|grad u|^2u-B,u>{tag}"))
    return out


def _worst(reports_by_name: dict, name: str) -> CheckReport:
    reps = reports_by_name[name]
    return min(reps, key=lambda r: r.margin)


def orthogonality_ensemble(grid: GridSpec, samples: int = 100, seed: int = 0, dealias: bool = True,
                           decay_range=(2.1, 4.0)) -> list:
    """Worst case of the suite over random fields on the manifold."""
    rng = np.random.default_rng(seed)
    by_name: dict = {}
    for i in range(samples):
        s = int(rng.integers(0, 2**31))
        u = random_smooth_field(s, float(rng.uniform(*decay_range)), grid)
        w = random_smooth_field(s + 1, float(rng.uniform(*decay_range)), grid)
        for r in check_orthogonality_suite(u, w, dealias=dealias, label=f"n={grid.n} seed {s}"):
            by_name.setdefault(r.name, []).append(r)
    return [_worst(by_name, k) for k in by_name]


# ----------------------------------------------------------- Ladyzhenskaya


LADYZHENSKAYA = 2.0**0.25


def random_h1_field(rng: np.random.Generator, grid: GridSpec, decay: float) -> SpectralVector:
    """Mean-zero vector field with independent components ~ |k|^-decay (not solenoidal)."""
    K = min(grid.k_band, grid.n // 2 - 1)
    c = np.zeros((2,) + grid.shape, dtype=np.complex128)
    k1 = np.arange(-K, K + 1) % grid.n
    rows = c[:, k1, : K + 1]
    rows = rng.normal(size=rows.shape) + 1j * rng.normal(size=rows.shape)
    c[:, k1, : K + 1] = rows
    with np.errstate(divide="ignore"):
        env = np.where(grid.ksq > 0, grid.ksq ** (-decay / 2.0), 0.0)
    c = _hermitize(c * env)
    return SpectralVector(grid, c)


def ladyzhenskaya_ratio(v: SpectralVector) -> float:
    n = sobolev_norms(v)
    rhs = LADYZHENSKAYA * math.sqrt(n.h * n.v)
    return _l4(v) / rhs if rhs > 0 else 0.0


def check_ladyzhenskaya(samples: int = 100, grid: GridSpec | None = None, seed: int = 0) -> CheckReport:
    if samples < 100:
        raise ValueError("need at least 100 samples")
    grid = grid or GridSpec(64)
    rng = np.random.default_rng(seed)
    best, wit = 0.0, ""
    for i in range(samples):
        decay = float(rng.uniform(1.2, 4.0))
        if i % 2:
            v = random_h1_field(rng, grid, decay)
            kind = "random vector field"
        else:
            v = random_smooth_field(int(rng.integers(0, 2**31)), max(decay, 2.05), grid)
            kind = "random solenoidal field"
        r = ladyzhenskaya_ratio(v)
        if r > best:
            best, wit = r, f"{kind} sample {i}, decay {decay:.3f}, ratio {r:.6f}"
    return _report("ladyzhenskaya_2^(1/4)", best, 1.0, wit)


# --------------------------------------------------------------- Lipschitz


def _pair(rng, grid, band):
    s1, s2 = (int(x) for x in rng.integers(0, 2**31, size=2))
    d1, d2 = rng.uniform(2.1, 4.0, size=2)
    a1, a2 = rng.uniform(0.1, 3.0, size=2)
    u1 = random_smooth_field(s1, float(d1), grid, band=band) * float(a1)
    u2 = random_smooth_field(s2, float(d2), grid, band=band) * float(a2)
    if rng.uniform() < 0.3:
        u2 = u1 + random_smooth_field(s2, float(d2), grid, band=band) * float(1e-3 * a2)
    return u1, u2, (s1, s2)


def g1_ratio(u1: SpectralVector, u2: SpectralVector) -> float:
    n1, n2 = sobolev_norms(u1).v, sobolev_norms(u2).v
    d = u1 - u2
    lhs = l2_norm(u1 * n1**2 - u2 * n2**2)
    rhs = sobolev_norms(d).v * (n1 + n2) ** 2
    return lhs / rhs if rhs > 0 else 0.0


def g2_ratio(u1: SpectralVector, u2: SpectralVector) -> float:
    a, b = sobolev_norms(u1), sobolev_norms(u2)
    d = u1 - u2
    dn = sobolev_norms(d)
    lhs = l2_norm(bilinear_b(u1, u1) - bilinear_b(u2, u2))
    rhs = math.sqrt(a.v * a.e) * dn.v + b.v * math.sqrt(dn.v * dn.e)
    return lhs / rhs if rhs > 0 else 0.0


def _lipschitz(name, ratio_fn, pairs, ns, seed):
    band = min(min(GridSpec(n).k_band, n // 2 - 1) for n in ns)
    sups = []
    wit = ""
    for n in ns:
        grid = GridSpec(n)
        rng = np.random.default_rng(seed)
        best = 0.0
        for i in range(pairs):
            u1, u2, seeds = _pair(rng, grid, band)
            r = ratio_fn(u1, u2)
            if r > best:
                best = r
                wit = f"n={n} pair {i} seeds {seeds}"
        sups.append(best)
    rep = _stability(name, sups[0], sups[-1], 0.2,
                     f"empirical C = {', '.join(f'{s:.6g}' for s in sups)} at n = {list(ns)}; max at {wit}")
    return rep, sups


def check_lipschitz_g1(pairs: int = 1000, ns=(32, 64), seed: int = 0) -> CheckReport:
    return _lipschitz("lipschitz_G1", g1_ratio, pairs, ns, seed)[0]


def check_lipschitz_g2(pairs: int = 1000, ns=(32, 64), seed: int = 0) -> CheckReport:
    return _lipschitz("lipschitz_G2", g2_ratio, pairs, ns, seed)[0]


# ------------------------------------------------------ curl isomorphism


def random_mean_zero_scalar(rng: np.random.Generator, grid: GridSpec, decay: float = 2.0) -> SpectralScalar:
    K = min(grid.k_band, grid.n // 2 - 1)
    c = np.zeros(grid.shape, dtype=np.complex128)
    k1 = np.arange(-K, K + 1) % grid.n
    block = rng.normal(size=(len(k1), K + 1)) + 1j * rng.normal(size=(len(k1), K + 1))
    c[k1, : K + 1] = block
    with np.errstate(divide="ignore"):
        env = np.where(grid.ksq > 0, grid.ksq ** (-decay / 2.0), 0.0)
    return SpectralScalar(grid, _hermitize(c * env))


def check_curl_isomorphism(grid: GridSpec | None = None, samples: int = 20, seed: int = 0) -> list:
    grid = grid or GridSpec(64)
    rng = np.random.default_rng(seed)
    worst_a = worst_b = worst_c = 0.0
    for i in range(samples):
        w = random_mean_zero_scalar(rng, grid, float(rng.uniform(0.5, 3.0)))
        back = curl(biot_savart(w))
        worst_a = max(worst_a, float(np.abs(back.coeffs - w.coeffs).max() / np.abs(w.coeffs).max()))
        u = random_smooth_field(int(rng.integers(0, 2**31)), float(rng.uniform(2.1, 4.0)), grid)
        again = biot_savart(curl(u))
        worst_b = max(worst_b, float(np.abs(again.coeffs - u.coeffs).max() / np.abs(u.coeffs).max()))
        worst_c = max(worst_c, abs(ellreg1_ratio(u) - 1.0))
    return [
        _report("curl_after_biot_savart", worst_a, 1e-13, f"{samples} random mean-zero scalars, n={grid.n}"),
        _report("biot_savart_after_curl", worst_b, 1e-13, f"{samples} random solenoidal fields, n={grid.n}"),
        _report("ellreg1_constant_one", worst_c, 1e-13, "|Lap u| / |grad Curl u| - 1"),
    ]


def ellreg2_constants(p: float, ns=(32, 64, 128), samples: int = 100, seed: int = 0) -> list:
    band = min(min(GridSpec(n).k_band, n // 2 - 1) for n in ns)
    out = []
    for n in ns:
        grid = GridSpec(n)
        rng = np.random.default_rng(seed)
        best = 0.0
        for _ in range(samples):
            u = random_smooth_field(int(rng.integers(0, 2**31)), float(rng.uniform(2.1, 4.0)), grid, band=band)
            best = max(best, ellreg2_ratio(u, p))
        out.append(best)
    return out


def check_ellreg2(ps=(4, 8), ns=(32, 64, 128), samples: int = 100, seed: int = 0) -> list:
    reps = []
    for p in ps:
        cs = ellreg2_constants(p, ns, samples, seed)
        spread = (max(cs) - min(cs)) / max(cs)
        ok = all(math.isfinite(c) for c in cs) and spread <= 0.2
        reps.append(CheckReport(f"ellreg2_p{p}_stable", bool(ok), float(0.2 - spread),
                                f"C_{p} = {', '.join(f'{c:.6g}' for c in cs)} at n = {list(ns)}", 0.2))
    return reps


# ---------------------------------------------------------------- cutoff


def check_cutoff(points: int = 10_000) -> list:
    xs = np.linspace(0.0, 4.0, points)
    th = theta(xs)
    dth = theta_prime(xs)
    plateau = float(np.abs(th[xs <= 1.0] - 1.0).max())
    support = float(np.abs(th[xs >= 3.0]).max())
    rises = float(max(np.diff(th).max(), 0.0))
    slope = float(np.abs(dth).max())
    fd = float(np.abs(np.diff(th) / np.diff(xs)).max())
    return [
        _report("theta_plateau", plateau, 0.0, "max |theta - 1| on [0,1]"),
        _report("theta_support", support, 0.0, "max |theta| on [3,4]"),
        _report("theta_non_increasing", rises, 0.0, f"largest increment on a {points}-point scan"),
        _report("theta_slope_le_1", max(slope, fd), 1.0, f"analytic {slope:.12f}, difference quotient {fd:.12f}",
                1e-12),
        _report("K(1,1)=150", abs(k_constant(1, 1.0) - 150.0), 0.0, f"K(1,1) = {k_constant(1, 1.0)!r}"),
    ]


# ------------------------------------------------------------- trajectory


def check_trajectory(traj: TrajectoryRecord, nu: float | None = None, renormalized: bool = False,
                     phi: SpectralScalar | None = None) -> list:
    """Manifold, monotonicity, energy identity, orthogonality columns and the
    vorticity bounds on a finished velocity run."""
    nu = traj.nu if nu is None else float(nu)
    t = traj.times
    T = float(t[-1] - t[0])
    dt = traj.dt
    steps = len(t) - 1
    v = traj.column("v_norm")
    v0 = float(v[0])
    out = []

    drift = float(np.abs(traj.column("constraint_residual")).max())
    floor = 100.0 * EPS * max(steps, 1)
    tol = floor if renormalized else 10.0 * dt**4 * T * max(1.0, nu * v0 * v0) ** 4 + floor
    out.append(_report("constraint_preserved", drift, tol, f"max ||u|_H - 1| = {drift:.3e}"))

    rises = np.diff(v)
    worst = float(rises.max()) if len(rises) else 0.0
    out.append(_report("v_norm_non_increasing", worst, 1e-12 * max(v0, 1.0),
                       f"largest row-to-row increase {worst:.3e}"))

    res = energy_identity_residual(traj)
    rmax = float(np.abs(res).max())
    if steps >= 4 and steps % 2 == 0:
        e2v = traj.column("e_norm") ** 2 - v**4
        fine = _trapezoid_cumulative(e2v, t)[::2]
        coarse = _trapezoid_cumulative(e2v[::2], t[::2])
        q_est = nu * float(np.abs(fine - coarse).max()) / 3.0
    else:
        q_est = 0.0
    etol = 3.0 * q_est + 1e-10 * max(v0 * v0, 1.0)
    out.append(_report("energy_identity", rmax, etol, f"max residual {rmax:.3e}, quadrature estimate {q_est:.3e}"))

    for col in ("b_u_ortho", "b_au_ortho"):
        m = float(traj.column(col).max())
        out.append(_report(f"{col}_column", m, ORTHO_TOL, f"max {col} = {m:.3e}"))

    vt = vorticity_from_velocity(traj)
    mp = max_principle_check(vt, v0, nu, T)
    out.append(CheckReport("vorticity_max_principle", mp.linf_holds, mp.linf_margin,
                           f"sup |omega|_inf = {mp.sup_omega:.6g} vs bound {mp.linf_bound:.6g}", mp.slack))
    out.append(CheckReport("enstrophy_budget", mp.budget_holds, mp.budget_margin,
                           f"lhs {mp.budget_lhs:.6g} vs rhs {mp.budget_rhs:.6g}", mp.slack))
    if len(vt) > 1:
        phi = phi if phi is not None else default_test_function(traj.grid)
        worst_ratio, bound = 0.0, 0.0
        for s_t in vt.snapshot_times[1:]:
            r = weak_form_residual(vt, phi, float(s_t))
            worst_ratio, bound = max(worst_ratio, r.equicontinuity_ratio), r.equicontinuity_bound
        out.append(_report("equicontinuity_bound", worst_ratio, 1.1 * bound,
                           f"max ratio {worst_ratio:.6g} vs 1.1 x {bound:.6g}"))
    return out


def default_test_function(grid: GridSpec) -> SpectralScalar:
    """phi = cos(x1) sin(2 x2) + sin(x1 + x2), a smooth band-limited test function."""
    x1, x2 = grid.mesh()
    from .spectral import forward_transform
    return forward_transform(np.cos(x1) * np.sin(2 * x2) + np.sin(x1 + x2), grid)


# ------------------------------------------------------------------ suite


def run_invariant_suite(n: int = 32, dealias_fraction: float = 2.0 / 3.0, seed: int = 0,
                        samples: int = 100, quick_run: bool = True) -> list:
    """Everything the invariants command reports, deterministic in its inputs."""
    grid = GridSpec(n, dealias_fraction)
    nodealias = dealias_fraction >= 1.0
    reports = []
    reports += orthogonality_ensemble(grid, samples=samples, seed=seed, dealias=not nodealias)
    tg = taylor_green(grid)
    reports += [CheckReport(r.name + "_taylor_green", r.passed, r.margin, r.witness, r.tolerance)
                for r in check_orthogonality_suite(tg, dealias=not nodealias, label="Taylor-Green")]
    reports.append(check_ladyzhenskaya(max(samples, 100), GridSpec(max(n, 32)), seed))
    reports.append(check_lipschitz_g1(max(samples, 100), seed=seed))
    reports.append(check_lipschitz_g2(max(samples, 100), seed=seed))
    reports += check_curl_isomorphism(GridSpec(max(n, 32)), seed=seed)
    reports += check_ellreg2(samples=20, seed=seed)
    reports += check_cutoff()
    if quick_run:
        u0 = random_smooth_field(seed, 3.0, GridSpec(max(n, 32)))
        traj = integrate(u0, IntegratorConfig(2e-3, 0.2, renormalize="off", snapshot_stride=10), 0.1)
        reports += check_trajectory(traj)
    return reports
