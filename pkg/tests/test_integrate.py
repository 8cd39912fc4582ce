import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cns2d.integrate import (
    DIAGNOSTIC_COLUMNS,
    CFLViolation,
    ConstraintDrift,
    IntegratorConfig,
    energy_identity_residual,
    integrate,
    integrate_euler,
    phi_contour,
    step_constrained_ns,
    step_euler,
    xt_norm,
)
from cns2d.spectral import GridSpec, l2_norm, random_smooth_field, taylor_green

G16, G32 = GridSpec(16), GridSpec(32)
BIG = 10**9  # snapshot stride that keeps only the endpoints


def _run(u0, dt, T, nu, **kw):
    kw.setdefault("renormalize", "off")
    kw.setdefault("snapshot_stride", BIG)
    return integrate(u0, IntegratorConfig(dt, T, **kw), nu)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(dt=0.0, horizon=1.0), dict(dt=-1e-3, horizon=1.0),
                                    dict(dt=1.0, horizon=1.0), dict(dt=1e-3, horizon=0.0),
                                    dict(dt=1e-3, horizon=1.0, scheme="rk45"),
                                    dict(dt=1e-3, horizon=1.0, renormalize="sometimes"),
                                    dict(dt=1e-3, horizon=1.0, snapshot_stride=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)

    def test_steps_must_divide(self):
        assert IntegratorConfig(1e-3, 1.0).n_steps == 1000
        with pytest.raises(ValueError):
            IntegratorConfig(0.3, 1.0).n_steps


class TestPhiFunctions:
    def test_match_closed_forms_away_from_zero(self):
        z = np.array([-0.5, -2.0, -10.0, -40.0])
        phi = phi_contour(z, ("phi1", "phi2"))
        np.testing.assert_allclose(phi["phi1"], np.expm1(z) / z, rtol=1e-13)
        np.testing.assert_allclose(phi["phi2"], (np.expm1(z) - z) / z**2, rtol=1e-12)

    def test_limits_at_zero(self):
        z = np.array([0.0, -1e-12, -1e-6])
        phi = phi_contour(z, ("phi1", "phi2"))
        # leading Taylor terms; the closed forms cancel catastrophically here
        np.testing.assert_allclose(phi["phi1"], 1 + z / 2 + z**2 / 6, rtol=1e-14)
        np.testing.assert_allclose(phi["phi2"], 0.5 + z / 6 + z**2 / 24, rtol=1e-14)


class TestSingleStep:
    @pytest.mark.parametrize("dt", [1e-2, 5e-3, 1e-3])
    @pytest.mark.parametrize("scheme", ["if_rk4", "etd_rk2", "etd_rk4"])
    def test_taylor_green_fixed(self, dt, scheme):
        u = taylor_green(G32)
        out = step_constrained_ns(u, dt, 1.0, scheme)
        assert l2_norm(out - u) <= 1e-10

    def test_inviscid_step_is_euler(self):
        u = random_smooth_field(3, 2.5, G32)
        np.testing.assert_array_equal(step_constrained_ns(u, 1e-3, 0.0).coeffs, step_euler(u, 1e-3).coeffs)

    def test_output_solenoidal_and_dealiased(self):
        u = random_smooth_field(3, 2.2, G32)
        out = step_constrained_ns(u, 5e-3, 0.1)
        assert out.is_divergence_free(1e-13)
        assert np.abs(out.coeffs * (1 - G32.mask)).max() == 0.0

    @pytest.mark.parametrize("scheme,order", [("if_rk4", 4), ("etd_rk2", 2), ("etd_rk4", 4)])
    def test_convergence_order(self, scheme, order):
        # one step vs two half steps differs at the local order p + 1; over a
        # fixed horizon the difference is at the global order p
        u = random_smooth_field(1, 2.5, G32)
        dts = (1e-2, 5e-3, 2.5e-3)
        loc, glob = [], []
        for dt in dts:
            one = step_constrained_ns(u, dt, 0.1, scheme)
            two = step_constrained_ns(step_constrained_ns(u, dt / 2, 0.1, scheme), dt / 2, 0.1, scheme)
            loc.append(l2_norm(one - two))
            a = _run(u, dt, 0.2, 0.1, scheme=scheme).final
            b = _run(u, dt / 2, 0.2, 0.1, scheme=scheme).final
            glob.append(l2_norm(a - b))
        slope_loc = np.polyfit(np.log(dts), np.log(loc), 1)[0]
        slope_glob = np.polyfit(np.log(dts), np.log(glob), 1)[0]
        assert slope_loc == pytest.approx(order + 1, abs=0.3)
        assert slope_glob == pytest.approx(order, abs=0.3)

    def test_cfl_guard(self):
        u = random_smooth_field(3, 2.5, G32)
        with pytest.raises(CFLViolation):
            step_constrained_ns(u, 5.0, 0.1)


class TestIntegrate:
    def test_taylor_green_steady_rows(self):
        tr = _run(taylor_green(G16), 1e-3, 1.0, 1.0, renormalize="monitor_only")
        v = tr.column("v_norm")
        assert np.abs(tr.column("constraint_residual")).max() <= 1e-10
        assert np.ptp(v) <= 1e-10 * v[0]

    def test_requires_manifold(self):
        with pytest.raises(ValueError):
            integrate(taylor_green(G16) * 1.1, IntegratorConfig(1e-2, 0.1), 1.0)

    def test_drift_shrinks_at_order_four(self):
        u = random_smooth_field(2, 3.0, G32)
        d = [np.abs(_run(u, dt, 0.5, 1.0).column("constraint_residual")).max() for dt in (5e-3, 2.5e-3)]
        assert d[0] / d[1] == pytest.approx(16.0, rel=0.3)

    @given(seed=st.integers(0, 2**32 - 1), decay=st.floats(2.2, 4.0))
    @settings(max_examples=8)
    def test_v_norm_non_increasing(self, seed, decay):
        tr = _run(random_smooth_field(seed, decay, G32), 5e-3, 0.5, 0.5)
        v = tr.column("v_norm")
        assert np.diff(v).max() <= 1e-12 * max(1.0, v[0])
        assert (v <= v[0] * (1 + 1e-14)).all()

    def test_every_step_renormalization(self):
        tr = _run(random_smooth_field(2, 3.0, G32), 1e-2, 0.5, 1.0, renormalize="every_step")
        assert np.abs(tr.column("constraint_residual")).max() <= 1e-14

    def test_monitor_aborts_on_drift(self):
        u = random_smooth_field(2, 3.0, G32)
        with pytest.raises(ConstraintDrift) as info:
            integrate(u, IntegratorConfig(0.2, 2.0, check_cfl=False), 1.0)
        assert info.value.trajectory is not None and len(info.value.trajectory.rows) >= 1

    def test_cfl_abort_keeps_partial_trajectory(self):
        u = random_smooth_field(2, 2.5, G32)
        with pytest.raises(CFLViolation) as info:
            integrate(u, IntegratorConfig(1.0, 4.0), 0.1)
        assert len(info.value.trajectory.rows) == 1

    def test_record_layout(self):
        u = random_smooth_field(2, 3.0, G32)
        tr = integrate(u, IntegratorConfig(1e-2, 0.25, snapshot_stride=10), 0.1)
        assert tr.rows.shape == (26, len(DIAGNOSTIC_COLUMNS))
        assert np.all(np.diff(tr.times) > 0)
        np.testing.assert_allclose(tr.snapshot_times, [0.0, 0.1, 0.2, 0.25], atol=1e-15)
        np.testing.assert_array_equal(tr.snapshots[0].coeffs, u.coeffs)
        assert tr.snapshot_at(0.2) is tr.snapshots[2]
        with pytest.raises(KeyError):
            tr.snapshot_at(0.15)
        v, e = tr.column("v_norm"), tr.column("e_norm")
        np.testing.assert_allclose(tr.column("dissipation"), e**2 - v**4, rtol=1e-12)
        assert (tr.column("dissipation") >= -1e-12).all()
        assert tr.column("b_u_ortho").max() <= 1e-11
        assert tr.column("b_au_ortho").max() <= 1e-11

    def test_restart_is_bitwise(self):
        u = random_smooth_field(6, 3.0, G32)
        whole = _run(u, 1e-2, 0.4, 0.1, snapshot_stride=20)
        first = _run(u, 1e-2, 0.2, 0.1)
        second = integrate(first.final, IntegratorConfig(1e-2, 0.2, renormalize="off", snapshot_stride=BIG), 0.1,
                           t0=0.2, require_on_manifold=False)
        np.testing.assert_array_equal(second.final.coeffs, whole.final.coeffs)
        np.testing.assert_array_equal(first.final.coeffs, whole.snapshots[1].coeffs)


class TestEuler:
    def test_taylor_green_stationary(self):
        u = taylor_green(G32)
        tr = integrate_euler(u, IntegratorConfig(1e-2, 1.0, renormalize="off"))
        assert max(l2_norm(s - u) for s in tr.snapshots) < 1e-14

    def test_conservation(self):
        u = random_smooth_field(4, 2.5, G32)
        errs = []
        for dt in (1e-2, 5e-3):
            tr = integrate_euler(u, IntegratorConfig(dt, 0.5, renormalize="off", snapshot_stride=BIG))
            v = tr.column("v_norm")
            errs.append(abs(v[-1] - v[0]))
            # <du/dt, u> = -<B(u,u), u> = 0 keeps |u|_H fixed to roundoff
            assert np.abs(tr.column("constraint_residual")).max() <= 1e-10
        assert errs[1] < errs[0] / 8 or errs[0] < 1e-13


class TestFunctionals:
    def test_xt_norm_taylor_green(self):
        tr = _run(taylor_green(G16), 1e-2, 1.0, 1.0)
        assert xt_norm(tr, 0.0) == pytest.approx(2.0, rel=1e-12)
        for t in (0.25, 0.5, 1.0):
            assert xt_norm(tr, t) == pytest.approx(2.0 + 4.0 * t, rel=1e-9)
        assert xt_norm(tr, 0.5, squared=False) == pytest.approx(2.0, rel=1e-9)
        with pytest.raises(ValueError):
            xt_norm(tr, 1.5)

    def test_xt_norm_monotone(self):
        tr = _run(random_smooth_field(8, 2.5, G32), 1e-2, 0.5, 0.2)
        vals = [xt_norm(tr, t) for t in np.linspace(0, 0.5, 23)]
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] == pytest.approx(tr.column("v_norm")[0] ** 2)

    def test_energy_identity_taylor_green(self):
        tr = _run(taylor_green(G16), 1e-2, 1.0, 1.0)
        assert np.abs(energy_identity_residual(tr)).max() < 1e-9

    def test_energy_identity_second_order(self):
        u = random_smooth_field(2, 3.0, G32)
        r = [np.abs(energy_identity_residual(_run(u, dt, 0.5, 0.5))).max() for dt in (1e-2, 5e-3)]
        assert r[0] / r[1] == pytest.approx(4.0, rel=0.15)
