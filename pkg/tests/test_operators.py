import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from critns.errors import CoverageError, DomainError
from critns.operators import (
    QuadratureRule,
    curl,
    dealias,
    divergence,
    duhamel_bilinear,
    duhamel_weights,
    gradient,
    heat_semigroup,
    laplacian,
    leray_project,
    nonlinear_term,
    nse_residual,
    oseen_apply,
    pressure_from_velocity,
    projected_nonlinearity,
    tensor_product,
    vorticity_residual,
)
from critns.spectral_field import (
    GridSpec,
    SpectralField,
    divergence_defect,
    irfft3,
    random_band_limited,
    sobolev_norm,
)
from critns.symmetry_profiles import AnalyticDatum, sample_datum
from critns.trajectory import Trajectory


@pytest.fixture
def tg16():
    return sample_datum(AnalyticDatum.taylor_green(), GridSpec(16))


class TestLinear:
    def test_heat_on_taylor_green(self, tg16):
        assert np.allclose(heat_semigroup(tg16, 0.3).coeffs, math.exp(-0.6) * tg16.coeffs, atol=1e-16)

    def test_heat_rejects_negative_time(self, tg16):
        with pytest.raises(DomainError):
            heat_semigroup(tg16, -1e-3)

    @settings(max_examples=20, deadline=None)
    @given(s=st.floats(0, 2), t=st.floats(0, 2))
    def test_semigroup_property(self, s, t):
        f = random_band_limited(GridSpec(8), np.random.default_rng(3), 2.5)
        a = heat_semigroup(heat_semigroup(f, s), t).coeffs
        b = heat_semigroup(f, s + t).coeffs
        assert np.allclose(a, b, rtol=1e-13, atol=1e-16)

    def test_leray_idempotent_and_kills_gradients(self, rng):
        g = GridSpec(16)
        f = random_band_limited(g, rng, 4.0, solenoidal=False)
        p = leray_project(f)
        assert divergence_defect(p) < 1e-14
        assert np.allclose(leray_project(p).coeffs, p.coeffs, rtol=0, atol=1e-14)
        phi = SpectralField(g, f.coeffs[0])
        assert sobolev_norm(leray_project(gradient(phi)), 0.0) < 1e-14 * sobolev_norm(gradient(phi), 0.0)

    def test_div_curl_and_laplacian(self, rng):
        g = GridSpec(16)
        u = random_band_limited(g, rng, 4.0)
        assert np.max(np.abs(divergence(curl(u)).coeffs)) < 1e-14
        # curl curl u = -Lap u for divergence-free u
        assert np.allclose(curl(curl(u)).coeffs, -laplacian(u).coeffs, atol=1e-13)

    def test_dealias_removes_high_modes(self, rng):
        g = GridSpec(16)
        u = random_band_limited(g, rng, 5.0)
        d = dealias(u).coeffs
        kint = g.wavenumbers.k_int
        high = (np.abs(kint[0]) >= 16 / 3) | (np.abs(kint[1]) >= 16 / 3) | (np.abs(kint[2]) >= 16 / 3)
        assert np.all(d[:, np.broadcast_to(high, g.spectral_shape)] == 0)


class TestNonlinear:
    def test_taylor_green_projected_nonlinearity_vanishes(self, tg16):
        # u.grad u is a pure gradient for the Taylor-Green vortex
        n = projected_nonlinearity(tg16.coeffs, tg16.grid)
        assert np.max(np.abs(n)) < 1e-15

    def test_taylor_green_pressure(self, tg16):
        g = tg16.grid
        X, Y, _ = g.mesh()
        expected = (np.cos(2 * X) + np.cos(2 * Y)) / 4 + 0 * X
        p = irfft3(pressure_from_velocity(tg16).coeffs, 16)
        assert np.max(np.abs(p - expected)) < 1e-14

    def test_pressure_poisson_equation(self, rng):
        # -Lap p = d_i d_j (u_i u_j)
        g = GridSpec(16)
        u = random_band_limited(g, rng, 3.0)
        p = pressure_from_velocity(u)
        t = tensor_product(u, u)
        rhs = divergence(divergence(t))
        assert np.allclose(-laplacian(p).coeffs, rhs.coeffs, atol=1e-13)

    def test_nonlinear_term_matches_tensor_divergence(self, rng):
        g = GridSpec(16)
        u = random_band_limited(g, rng, 3.0)
        assert np.allclose(nonlinear_term(u).coeffs, divergence(tensor_product(u, u)).coeffs, atol=1e-13)

    def test_oseen_composition(self, rng):
        g = GridSpec(16)
        u = random_band_limited(g, rng, 3.0)
        G = tensor_product(u, u)
        direct = heat_semigroup(leray_project(divergence(G)), 0.2)
        assert np.allclose(oseen_apply(G, 0.2).coeffs, direct.coeffs, atol=1e-14)
        with pytest.raises(DomainError):
            oseen_apply(G, 0.0)


class TestDuhamel:
    @pytest.mark.parametrize("kind", ["gauss-legendre", "midpoint"])
    def test_weights_against_quad(self, kind):
        g = GridSpec(8)
        h, tau = 0.1, 0.7
        W = duhamel_weights(g, h, tau, QuadratureRule(kind, 32))
        k2 = g.wavenumbers.k2[1, 2, 1]
        basis = [lambda th: (1 - th) ** 2, lambda th: th * (1 - th), lambda th: th**2]
        for m in range(3):
            ref, _ = integrate.quad(lambda s: math.exp(-k2 * (tau * h - s)) * basis[m](s / h), 0, tau * h,
                                    epsabs=1e-15, epsrel=1e-13)
            tol = 1e-13 if kind == "gauss-legendre" else 1e-3
            assert W[m][1, 2, 1] == pytest.approx(ref, rel=tol)

    def test_constant_inputs_closed_form(self, rng):
        # f = g = a for all s: B(t) = (1 - e^{-k^2 t}) / k^2 * (-P div(a (x) a))
        g = GridSpec(16)
        a = random_band_limited(g, rng, 3.0)
        traj = Trajectory.from_snapshots(g, [0.0, 0.1, 0.2], [a, a, a])
        t = 0.2
        b = duhamel_bilinear(traj, traj, t)
        k2 = g.wavenumbers.k2
        phi = np.where(k2 > 0, -np.expm1(-k2 * t) / np.where(k2 > 0, k2, 1.0), 0.0)
        expected = phi * projected_nonlinearity(a.coeffs, g)
        assert np.max(np.abs(b.coeffs - expected)) < 1e-13 * np.max(np.abs(expected))

    def test_bilinearity(self, rng):
        g = GridSpec(8)
        fs = [random_band_limited(g, rng, 2.0) for _ in range(3)]
        tr = lambda f: Trajectory.from_snapshots(g, [0.0, 0.05, 0.1], [f, heat_semigroup(f, 0.05), heat_semigroup(f, 0.1)])
        a, b, c = fs
        lhs = duhamel_bilinear(tr(a * 2.0 + b), tr(c), 0.1).coeffs
        rhs = 2.0 * duhamel_bilinear(tr(a), tr(c), 0.1).coeffs + duhamel_bilinear(tr(b), tr(c), 0.1).coeffs
        assert np.allclose(lhs, rhs, atol=1e-15)

    def test_zero_time_and_coverage(self, rng):
        g = GridSpec(8)
        a = random_band_limited(g, rng, 2.0)
        tr = Trajectory.from_snapshots(g, [0.0, 0.1], [a, a])
        assert np.all(duhamel_bilinear(tr, tr, 0.0).coeffs == 0)
        with pytest.raises(CoverageError):
            duhamel_bilinear(tr, tr, 0.2)


class TestResiduals:
    def test_taylor_green_residuals_small(self, tg_short):
        t = float(tg_short.times[8])
        assert nse_residual(tg_short, t) < 1e-3
        assert vorticity_residual(tg_short, t) < 1e-3

    def test_residual_needs_interior_time(self, tg_short):
        with pytest.raises(DomainError):
            nse_residual(tg_short, 0.0)

    def test_residual_converges_with_step(self):
        # second-order time difference: halving dt divides the residual by about 4
        g = GridSpec(16)
        u0 = sample_datum(AnalyticDatum.band_limited_random(5, band=(1, 3), amplitude=0.5), g)
        from critns.mild_solver import SolverConfig, solve

        r = []
        for dt in (1 / 32, 1 / 64):
            tr = solve(u0, 0.25, SolverConfig(dt=dt))
            r.append(nse_residual(tr, 0.125))
        assert 3.0 < r[0] / r[1] < 5.0
