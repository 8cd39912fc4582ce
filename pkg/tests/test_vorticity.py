import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cns2d.integrate import IntegratorConfig, integrate
from cns2d.spectral import (
    GridSpec,
    SpectralScalar,
    forward_transform,
    inverse_transform,
    random_smooth_field,
    sobolev_norms,
    taylor_green,
)
from cns2d.vorticity import (
    NonzeroMeanError,
    VorticityState,
    biot_savart,
    cross_check_forms,
    curl,
    ellreg1_ratio,
    ellreg2_ratio,
    h2_norm,
    integrate_vorticity,
    max_principle_check,
    scalar_inner,
    sup_norm,
    vorticity_from_velocity,
    weak_form_residual,
)
from cns2d.diagnostics import default_test_function, random_mean_zero_scalar

seeds = st.integers(min_value=0, max_value=2**32 - 1)
G32 = GridSpec(32)


def _scalar(values, grid=G32):
    return forward_transform(values, grid)


class TestCurl:
    def test_taylor_green(self):
        x1, x2 = G32.mesh()
        w = inverse_transform(curl(taylor_green(G32, normalized=False)))
        np.testing.assert_allclose(w, 2 * np.sin(x1) * np.sin(x2), atol=1e-14)

    def test_zero_and_gradient_modes(self):
        zero = taylor_green(G32) * 0.0
        assert not curl(zero).coeffs.any()
        x1, x2 = G32.mesh()
        phi = _scalar(np.cos(2 * x1 - x2) + np.sin(x1 + 3 * x2))
        d1, d2 = G32.k1, G32.k2
        grad = type(zero)(G32, np.stack([1j * d1 * phi.coeffs, 1j * d2 * phi.coeffs]))
        assert np.abs(curl(grad).coeffs).max() < 1e-15

    def test_mean_zero(self):
        assert curl(random_smooth_field(1, 2.5, G32)).coeffs[0, 0] == 0


class TestBiotSavart:
    def test_inverts_taylor_green(self):
        x1, x2 = G32.mesh()
        u = biot_savart(_scalar(2 * np.sin(x1) * np.sin(x2)))
        np.testing.assert_allclose(u.coeffs, taylor_green(G32, normalized=False).coeffs, atol=1e-15)

    def test_zero(self):
        assert not biot_savart(SpectralScalar(G32, np.zeros(G32.shape, complex))).coeffs.any()

    def test_rejects_mean(self):
        with pytest.raises(NonzeroMeanError):
            biot_savart(_scalar(np.ones((32, 32))))
        with pytest.raises(NonzeroMeanError):
            VorticityState(_scalar(np.full((32, 32), 0.5)), 0.0)

    @given(seed=seeds)
    def test_curl_after_biot_savart(self, seed):
        w = random_mean_zero_scalar(np.random.default_rng(seed), G32)
        back = curl(biot_savart(w))
        assert np.abs(back.coeffs - w.coeffs).max() <= 1e-13 * np.abs(w.coeffs).max()

    @given(seed=seeds, decay=st.floats(2.1, 4.0))
    def test_biot_savart_after_curl(self, seed, decay):
        u = random_smooth_field(seed, decay, G32)
        again = biot_savart(curl(u))
        assert np.abs(again.coeffs - u.coeffs).max() <= 1e-13 * np.abs(u.coeffs).max()
        assert again.is_divergence_free(1e-15)

    def test_enstrophy_is_v_norm(self):
        u = random_smooth_field(3, 3.0, G32)
        w = curl(u)
        assert scalar_inner(w, w) == pytest.approx(sobolev_norms(u).v ** 2, rel=1e-13)


class TestNorms:
    def test_sup_norm_oversampling(self):
        x1, x2 = G32.mesh()
        f = _scalar(np.sin(3 * x1 + 0.3) * np.cos(5 * x2 + 0.1))
        grid_max = np.abs(inverse_transform(f)).max()
        assert sup_norm(f.coeffs, G32) >= grid_max
        assert sup_norm(f.coeffs, G32) == pytest.approx(1.0, abs=2e-3)

    def test_h2_norm_single_mode(self):
        x1, _ = G32.mesh()
        f = _scalar(np.cos(2 * x1))
        l2sq = 2 * np.pi**2
        assert h2_norm(f) == pytest.approx(np.sqrt(l2sq * (1 + 4 + 16)), rel=1e-13)

    @given(seed=seeds, decay=st.floats(2.1, 4.0))
    def test_ellreg1_exact(self, seed, decay):
        assert ellreg1_ratio(random_smooth_field(seed, decay, G32)) == pytest.approx(1.0, abs=1e-13)

    def test_ellreg2_finite(self):
        u = random_smooth_field(4, 3.0, G32)
        for p in (4, 8):
            r = ellreg2_ratio(u, p)
            assert np.isfinite(r) and r > 0


class TestIntegrateVorticity:
    def test_taylor_green_stationary(self):
        w0 = curl(taylor_green(G32))
        for nu in (0.0, 1.0):
            tr = integrate_vorticity(w0, IntegratorConfig(1e-2, 1.0, snapshot_stride=10), nu)
            assert max(np.abs(s.omega.coeffs - w0.coeffs).max() for s in tr) < 1e-13

    def test_mean_preserved(self):
        w0 = curl(random_smooth_field(2, 2.5, G32))
        tr = integrate_vorticity(w0, IntegratorConfig(1e-2, 0.5), 0.1)
        assert tr.mean.max() == 0.0

    def test_inviscid_enstrophy_conservation(self):
        w0 = curl(random_smooth_field(2, 2.5, G32))
        drift = []
        for dt in (1e-2, 5e-3):
            tr = integrate_vorticity(w0, IntegratorConfig(dt, 0.5), 0.0)
            drift.append(abs(tr.enstrophy[-1] - tr.enstrophy[0]) / tr.enstrophy[0])
        assert drift[0] < 1e-8
        assert drift[1] < drift[0] / 8 or drift[0] < 1e-13

    def test_sequence_protocol(self):
        w0 = curl(random_smooth_field(2, 3.0, G32))
        tr = integrate_vorticity(w0, IntegratorConfig(1e-2, 0.1, snapshot_stride=5), 0.1)
        assert len(tr) == 3
        np.testing.assert_allclose(tr.snapshot_times, [0.0, 0.05, 0.1], atol=1e-15)
        assert tr[0].omega.coeffs is not w0.coeffs
        assert all(isinstance(s, VorticityState) for s in tr)

    def test_external_v_norm_path(self):
        u0 = random_smooth_field(5, 3.0, G32)
        cfg = IntegratorConfig(1e-2, 0.5, renormalize="off", snapshot_stride=10)
        vel = integrate(u0, cfg, 0.1)
        own = integrate_vorticity(curl(u0), cfg, 0.1)
        ext = integrate_vorticity(curl(u0), cfg, 0.1, v_norm_path=vel.column("v_norm"))
        gap = max(np.abs(a.omega.coeffs - b.omega.coeffs).max() for a, b in zip(own, ext))
        assert gap < 1e-8

    def test_velocity_view(self):
        u0 = random_smooth_field(5, 3.0, G32)
        vel = integrate(u0, IntegratorConfig(1e-2, 0.2, renormalize="off", snapshot_stride=5), 0.1)
        vt = vorticity_from_velocity(vel)
        np.testing.assert_allclose(vt.enstrophy, vel.column("v_norm") ** 2)
        assert len(vt) == len(vel.snapshots)


class TestCrossCheck:
    def test_taylor_green(self):
        d = cross_check_forms(taylor_green(G32), IntegratorConfig(1e-2, 1.0, renormalize="off"), 0.1)
        assert d <= 1e-10

    def test_independent_of_stride(self):
        u0 = random_smooth_field(5, 3.0, G32)
        a = cross_check_forms(u0, IntegratorConfig(1e-2, 0.2, snapshot_stride=1), 0.1)
        b = cross_check_forms(u0, IntegratorConfig(1e-2, 0.2, snapshot_stride=7), 0.1)
        assert a == b

    def test_fourth_order(self):
        u0 = random_smooth_field(5, 3.0, G32)
        d = [cross_check_forms(u0, IntegratorConfig(dt, 0.5, renormalize="off"), 0.1) for dt in (1e-2, 5e-3)]
        assert d[0] / d[1] == pytest.approx(16.0, rel=0.3)

    def test_same_scheme_is_roundoff(self):
        # both dealiased forms are one Galerkin system
        u0 = random_smooth_field(5, 3.0, G32)
        d = cross_check_forms(u0, IntegratorConfig(1e-2, 0.5, renormalize="off"), 0.1, vorticity_scheme="if_rk4")
        assert d < 1e-12


class TestMaxPrinciple:
    def test_inviscid_bound_is_initial_sup(self):
        w0 = curl(random_smooth_field(7, 3.0, G32))
        tr = integrate_vorticity(w0, IntegratorConfig(1e-2, 0.5, snapshot_stride=5), 0.0)
        rep = max_principle_check(tr, 1.0, 0.0, 0.5)
        assert rep.linf_bound == rep.omega0_linf
        assert rep.budget_lhs == 0.0

    def test_taylor_green_constant_sup(self):
        u0 = taylor_green(G32)
        tr = integrate_vorticity(curl(u0), IntegratorConfig(1e-2, 1.0, snapshot_stride=10), 0.5)
        rep = max_principle_check(tr, sobolev_norms(u0).v, 0.5, 1.0)
        assert rep.passed
        sups = [sup_norm(s.omega.coeffs, G32) for s in tr]
        assert np.ptp(sups) < 1e-13

    @pytest.mark.parametrize("seed", [0, 1])
    def test_random_run(self, seed):
        u0 = random_smooth_field(seed, 2.5, G32)
        tr = integrate_vorticity(curl(u0), IntegratorConfig(5e-3, 1.0, snapshot_stride=10), 0.05)
        rep = max_principle_check(tr, sobolev_norms(u0).v, 0.05, 1.0)
        assert rep.linf_holds and rep.budget_holds
        assert rep.linf_margin > 0 and rep.budget_margin > 0


class TestWeakForm:
    def test_taylor_green_residual(self):
        u0 = taylor_green(G32)
        tr = integrate_vorticity(curl(u0), IntegratorConfig(1e-2, 0.5, snapshot_stride=5), 0.3)
        phi = default_test_function(G32)
        res = weak_form_residual(tr, phi, 0.5)
        assert abs(res.residual) < 1e-12
        assert res.equicontinuity_holds

    def test_residual_shrinks_with_refinement(self):
        u0 = random_smooth_field(3, 2.5, G32)
        phi = default_test_function(G32)
        out = []
        for dt, stride in ((1e-2, 2), (5e-3, 2)):
            tr = integrate_vorticity(curl(u0), IntegratorConfig(dt, 0.5, snapshot_stride=stride), 0.1)
            out.append(abs(weak_form_residual(tr, phi, 0.5).residual))
        assert out[1] < out[0] / 3

    def test_inviscid_run(self):
        u0 = random_smooth_field(3, 2.5, G32)
        phi = default_test_function(G32)
        tr = integrate_vorticity(curl(u0), IntegratorConfig(5e-3, 0.5, snapshot_stride=1), 0.0)
        res = weak_form_residual(tr, phi, 0.5)
        assert abs(res.residual) < 1e-5
        assert res.equicontinuity_holds

    def test_unknown_time(self):
        tr = integrate_vorticity(curl(taylor_green(G32)), IntegratorConfig(1e-2, 0.1, snapshot_stride=5), 0.1)
        with pytest.raises(ValueError):
            weak_form_residual(tr, default_test_function(G32), 0.03)
