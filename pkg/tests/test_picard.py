import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cns2d.integrate import IntegratorConfig, integrate
from cns2d.picard import (
    CutoffSpec,
    PicardConfig,
    PicardNonConvergence,
    PicardPath,
    contraction_ratio,
    duhamel_convolution,
    duhamel_path,
    estimate_embedding_constants,
    k_constant,
    picard_iterate,
    psi_map,
    select_T0,
    semigroup_path,
    semigroup_xt_ratio,
    stopping_time,
    theta,
    theta_cutoff,
    theta_prime,
    truncation_level,
    xt_path_norm,
    _single_mode,
)
from cns2d.spectral import GridSpec, SpectralVector, random_smooth_field, sobolev_norms, taylor_green

G16 = GridSpec(16)


class TestTheta:
    def test_plateau_and_tail(self):
        assert theta(0.0) == 1.0 and theta(0.5) == 1.0 and theta(1.0) == 1.0
        assert theta(3.0) == 0.0 and theta(4.0) == 0.0
        assert 0.0 < theta(2.0) < 1.0

    def test_midpoint(self):
        assert theta(2.0) == pytest.approx(0.5, abs=1e-15)

    def test_monotone(self):
        x = np.linspace(0, 5, 4001)
        assert np.all(np.diff(theta(x)) <= 0)

    def test_slope_bound(self):
        x = np.linspace(0, 5, 20001)
        slopes = np.abs(theta_prime(x))
        assert slopes.max() <= 1.0 + 1e-12
        assert theta_prime(2.0) == pytest.approx(-1.0, abs=1e-14)

    @given(st.floats(1.05, 2.95))
    def test_derivative_matches_differences(self, x):
        h = 1e-6
        fd = (theta(x + h) - theta(x - h)) / (2 * h)
        assert theta_prime(x) == pytest.approx(fd, abs=1e-7)

    def test_negative_raises(self):
        with pytest.raises(ValueError):
            theta(-0.1)
        with pytest.raises(ValueError):
            theta_cutoff(-1.0, CutoffSpec(2))

    def test_scaled(self):
        spec = CutoffSpec(3)
        assert spec(3.0) == 1.0 and spec(9.0) == 0.0
        assert spec.derivative(6.0) == pytest.approx(-1.0 / 3, abs=1e-14)
        with pytest.raises(ValueError):
            CutoffSpec(0)


class TestConstants:
    def test_k_values(self):
        assert k_constant(1, 1.0) == 150.0
        assert k_constant(1, 1e-40) == pytest.approx(33.0, rel=1e-9)
        assert k_constant(2, 1.0) == 6 * (27 * 8 + 36 + 24 + 2)

    @given(st.integers(1, 20), st.floats(1e-8, 10.0))
    def test_k_monotone(self, n, T):
        assert k_constant(n + 1, T) > k_constant(n, T)
        assert k_constant(n, 2 * T) > k_constant(n, T)

    def test_select_T0_residual(self):
        T = select_T0(1, 0.5, 1.0)
        x = T**0.25
        assert (117 * x + 33) * x == pytest.approx(0.5, rel=1e-10)

    def test_select_T0_monotone(self):
        Ts = [select_T0(n, 0.5, 0.64) for n in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(Ts, Ts[1:]))
        assert select_T0(2, 0.25, 1.0) < select_T0(2, 0.5, 1.0)

    @given(st.integers(1, 10), st.floats(0.05, 0.45))
    def test_doubling_epsilon(self, n, eps):
        # K grows with T, so doubling epsilon less than doubles T^(1/4)
        a = select_T0(n, eps, 1.0) ** 0.25
        b = select_T0(n, 2 * eps, 1.0) ** 0.25
        assert a < b <= 2 * a * (1 + 1e-9)

    def test_select_T0_rejects(self):
        with pytest.raises(ValueError):
            select_T0(1, 1.0, 1.0)
        with pytest.raises(ValueError):
            select_T0(1, 0.5, 0.0)

    def test_truncation_level(self):
        assert truncation_level(1.0, 1.2247, 0.5) == 3
        assert truncation_level(0.0, 1.0, 0.5) == 1
        assert truncation_level(2.0, 1.0, 0.5) == 5


class TestDuhamel:
    def test_constant_single_mode(self):
        u = _single_mode(G16, 1, 2)
        lam = 5.0
        times = np.linspace(0, 0.3, 7)
        out = duhamel_path(PicardPath.constant(u, times))
        for t, c in zip(times, out.coeffs):
            np.testing.assert_allclose(c, -math.expm1(-lam * t) / lam * u.coeffs, atol=1e-15)
        mid = duhamel_convolution(PicardPath.constant(u, times), 0.125)
        np.testing.assert_allclose(mid.coeffs, -math.expm1(-lam * 0.125) / lam * u.coeffs, atol=1e-15)

    def test_linear_in_time(self):
        # f(r) = r u: int_0^t e^{-lam (t-r)} r dr = (lam t - 1 + e^{-lam t}) / lam^2
        u = _single_mode(G16, 2, 1)
        lam = 5.0
        times = np.linspace(0, 0.5, 5)
        f = PicardPath(G16, times, times[:, None, None, None] * u.coeffs[None])
        out = duhamel_path(f)
        exact = (lam * times - 1 + np.exp(-lam * times)) / lam**2
        np.testing.assert_allclose(out.coeffs, exact[:, None, None, None] * u.coeffs[None], atol=1e-15)

    def test_linearity_and_zero(self):
        times = np.linspace(0, 0.2, 9)
        a = PicardPath.constant(random_smooth_field(1, 3.0, G16), times)
        b = PicardPath(G16, times, np.cos(times)[:, None, None, None] * random_smooth_field(2, 3.0, G16).coeffs)
        lhs = duhamel_path(a + b).coeffs
        rhs = duhamel_path(a).coeffs + duhamel_path(b).coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-15)
        assert not duhamel_path(PicardPath.zeros(G16, times)).coeffs.any()

    def test_outside_span(self):
        times = np.linspace(0, 0.2, 5)
        with pytest.raises(ValueError):
            duhamel_convolution(PicardPath.zeros(G16, times), 0.3)

    def test_nonuniform_rejected(self):
        with pytest.raises(ValueError):
            duhamel_path(PicardPath.zeros(G16, [0.0, 0.1, 0.3]))

    def test_semigroup(self):
        u = _single_mode(G16, 1, 1)
        p = semigroup_path(u, [0.0, 1.0])
        np.testing.assert_allclose(p.coeffs[1], math.exp(-2.0) * u.coeffs, atol=1e-16)


class TestPsi:
    def test_zero_is_fixed(self):
        zero = SpectralVector(G16, np.zeros((2,) + G16.shape, complex))
        cfg = PicardConfig(n=2, horizon=0.1, quad_nodes=5)
        out = psi_map(PicardPath.zeros(G16, cfg.times), zero, cfg)
        assert not out.coeffs.any()

    def test_large_path_cut_off(self):
        u0 = random_smooth_field(3, 3.0, G16)
        cfg = PicardConfig(n=1, horizon=0.05, quad_nodes=5)
        big = PicardPath.constant(u0 * (3.5 / sobolev_norms(u0).v), cfg.times)
        out = psi_map(big, u0, cfg)
        np.testing.assert_allclose(out.coeffs, semigroup_path(u0, cfg.times).coeffs, atol=0)

    def test_taylor_green_constant_path(self):
        u0 = taylor_green(G16)
        T = 1e-3
        cfg = PicardConfig(n=10, horizon=T, quad_nodes=5)
        out = psi_map(PicardPath.constant(u0, cfg.times), u0, cfg)
        dev = np.abs(out.coeffs - u0.coeffs[None]).max()
        assert dev < 1e-9

    def test_grid_mismatch(self):
        cfg = PicardConfig(n=1, horizon=0.1, quad_nodes=3)
        with pytest.raises(ValueError):
            psi_map(PicardPath.zeros(G16, cfg.times), taylor_green(GridSpec(8)), cfg)


class TestPicardIterate:
    def test_zero(self):
        zero = SpectralVector(G16, np.zeros((2,) + G16.shape, complex))
        res = picard_iterate(zero, PicardConfig(n=1, horizon=0.1, quad_nodes=5))
        assert res.converged and res.iterations == 1
        assert res.observed_ratio == 0.0

    def test_taylor_green_constant(self):
        u0 = taylor_green(G16)
        res = picard_iterate(u0, PicardConfig(n=3, horizon=1e-3, quad_nodes=9))
        assert res.converged
        assert np.abs(res.path.coeffs - u0.coeffs[None]).max() < 1e-9

    def test_matches_integrator(self):
        u0 = random_smooth_field(4, 3.0, G16)
        T = 1e-2
        res = picard_iterate(u0, PicardConfig(n=5, horizon=T, quad_nodes=33))
        assert res.converged and res.tau_n == pytest.approx(T)
        ref = integrate(u0, IntegratorConfig(T / 32, T, renormalize="off", snapshot_stride=32, check_cfl=False), 1.0)
        gap = np.abs(res.path.coeffs[-1] - ref.snapshots[-1].coeffs).max()
        assert gap < 1e-6 * np.abs(u0.coeffs).max()

    def test_contraction_on_pairs(self):
        eps = 0.5
        n = 2
        cfg = PicardConfig(n=n, horizon=select_T0(n, eps, 0.64), quad_nodes=9)
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(6):
            paths = []
            for _ in range(2):
                u = random_smooth_field(int(rng.integers(2**31)), 3.0, G16)
                u = u * (rng.uniform(0.5, 4.0) * n / sobolev_norms(u).v)
                paths.append(PicardPath.constant(u, cfg.times))
            worst = max(worst, contraction_ratio(paths[0], paths[1], cfg))
        assert worst <= eps + 0.05

    def test_non_convergence(self):
        # fewer iterations than min_iters on a nonzero datum
        u0 = random_smooth_field(4, 3.0, G16)
        cfg = PicardConfig(n=5, horizon=0.01, quad_nodes=5, max_iters=3)
        with pytest.raises(PicardNonConvergence) as info:
            picard_iterate(u0, cfg)
        assert len(info.value.history) == 3
        res = picard_iterate(u0, cfg, raise_on_failure=False)
        assert not res.converged

    def test_stopping_time(self):
        u0 = random_smooth_field(4, 3.0, G16)
        times = np.linspace(0, 1, 5)
        p = PicardPath.constant(u0, times)
        assert stopping_time(p, 1000) == 1.0
        assert stopping_time(p, 1e-3) == 0.0
        assert xt_path_norm(p) > sobolev_norms(u0).v


class TestEmbedding:
    @pytest.mark.parametrize("k", [(1, 1), (2, 3), (-4, 1)])
    def test_single_mode_c2(self, k):
        u = _single_mode(G16, *k)
        lam = k[0] ** 2 + k[1] ** 2
        for T in (0.01, 1.0):
            expect = math.sqrt(1 + -math.expm1(-2 * lam * T) / 2)
            assert semigroup_xt_ratio(u, T) == pytest.approx(expect, rel=1e-13)

    def test_c2_limit(self):
        assert semigroup_xt_ratio(_single_mode(G16, 5, 5), 10.0) == pytest.approx(math.sqrt(1.5), rel=1e-14)

    def test_grid_stability(self):
        a = estimate_embedding_constants(GridSpec(32), samples=100, seed=3, horizons=(1.0,), quad_nodes=17)
        b = estimate_embedding_constants(GridSpec(64), samples=100, seed=3, horizons=(1.0,), quad_nodes=17)
        assert a.C1 == pytest.approx(b.C1, rel=0.1)
        assert a.C2 == pytest.approx(b.C2, rel=0.1)
        assert a.C2 <= math.sqrt(1.5) + 1e-12
        assert a.C1_witness and a.C2_witness

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            estimate_embedding_constants(G16, samples=10)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(n=0, horizon=1.0),
        dict(n=1, horizon=0.0),
        dict(n=1, horizon=1.0, epsilon=1.0),
        dict(n=1, horizon=1.0, quad_nodes=1),
        dict(n=1, horizon=1.0, max_iters=0),
        dict(n=1, horizon=1.0, nu=0.5),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            PicardConfig(**kw)

    def test_times(self):
        np.testing.assert_allclose(PicardConfig(n=1, horizon=2.0, quad_nodes=5).times, [0, 0.5, 1, 1.5, 2])
