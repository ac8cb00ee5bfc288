import math

import numpy as np
import pytest

from critns.errors import DomainError, IncomparableError, StepFailure
from critns.mild_solver import SolverConfig, cross_check_uniqueness, integrate_interval, solve, step
from critns.spectral_field import GridSpec, SpectralField, lebesgue_norm, random_band_limited
from critns.symmetry_profiles import AnalyticDatum, sample_datum


@pytest.fixture(scope="module")
def small_datum():
    return sample_datum(AnalyticDatum.band_limited_random(11, slope=-2, band=(1, 3), amplitude=0.3), GridSpec(16))


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig(dt=0.1)
        assert cfg.min_dt == pytest.approx(0.1 / 1024)

    @pytest.mark.parametrize("kw", [{"dt": 0}, {"dt": 0.1, "min_dt": 0.2}, {"picard_tol": -1.0}, {"picard_max_iter": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestDatumChecks:
    def test_compressible_datum_rejected(self, rng):
        g = GridSpec(16)
        with pytest.raises(DomainError):
            solve(random_band_limited(g, rng, 3.0, solenoidal=False), 0.1, SolverConfig())

    def test_mean_rejected(self, small_datum):
        c = small_datum.coeffs.copy()
        c[0, 0, 0, 0] = 1.0
        with pytest.raises(DomainError):
            solve(SpectralField(small_datum.grid, c), 0.1, SolverConfig())

    def test_horizon_must_be_positive(self, small_datum):
        with pytest.raises(DomainError):
            solve(small_datum, 0.0, SolverConfig())


class TestStepwise:
    def test_taylor_green_exact(self, tg_short):
        u0 = tg_short.snapshots[0]
        for t, u in zip(tg_short.times, tg_short.snapshots):
            assert lebesgue_norm(u - u0 * math.exp(-2 * t), 3) < 1e-13
        assert tg_short.terminated_reason == "horizon_reached"

    def test_zero_datum(self):
        g = GridSpec(8)
        tr = solve(SpectralField.zeros(g), 0.1, SolverConfig(dt=0.05))
        assert tr.terminated_reason == "horizon_reached"
        assert all(np.all(u.coeffs == 0) for u in tr.snapshots)

    def test_lattice_ends_at_horizon(self, small_datum):
        tr = solve(small_datum, 0.1, SolverConfig(dt=0.03))
        assert tr.times[-1] == 0.1
        assert np.allclose(np.diff(tr.times)[:-1], 0.03)

    def test_norm_threshold_declares_blowup(self, small_datum):
        tr = solve(small_datum, 1.0, SolverConfig(dt=1 / 32, norm_blowup_threshold=0.1))
        assert tr.terminated_reason == "blowup_detected"
        assert tr.info["t_star_estimate"] == tr.times[-1]

    def test_step_failure_halves_then_gives_up(self):
        g = GridSpec(16)
        big = sample_datum(AnalyticDatum.band_limited_random(2, band=(1, 3), amplitude=500.0), g)
        with pytest.raises(StepFailure):
            step(big, 0.25, SolverConfig())
        tr = solve(big, 1.0, SolverConfig(dt=0.25, min_dt=0.25 / 8, norm_blowup_threshold=1e9))
        assert tr.terminated_reason == "blowup_detected"
        assert tr.info["step_failures"] >= 1


class TestInterval:
    def test_taylor_green_one_iteration(self):
        u0 = sample_datum(AnalyticDatum.taylor_green(), GridSpec(16))
        tr = integrate_interval(u0, 0.25, SolverConfig(dt=1 / 16))
        assert tr.info["picard_iterations"] <= 2
        assert lebesgue_norm(tr.snapshots[-1] - u0 * math.exp(-0.5), 3) < 1e-13

    def test_failure_reports_interval(self):
        g = GridSpec(16)
        big = sample_datum(AnalyticDatum.band_limited_random(2, band=(1, 3), amplitude=500.0), g)
        tr = integrate_interval(big, 1.0, SolverConfig(dt=0.25, picard_max_iter=10))
        assert tr.terminated_reason == "picard_failure"
        assert tr.info["failed_interval"] == 1.0 and len(tr) == 1

    def test_routes_agree(self, small_datum):
        d = cross_check_uniqueness(small_datum, 0.25, SolverConfig(dt=1 / 32), SolverConfig(dt=1 / 256))
        assert d < 1e-5

    def test_incomparable(self, small_datum):
        with pytest.raises(IncomparableError):
            cross_check_uniqueness(small_datum, 0.25, SolverConfig(dt=1 / 16), SolverConfig(dt=1 / 16),
                                   at_times=[0.1])
        with pytest.raises(IncomparableError):
            cross_check_uniqueness(small_datum, 0.25, SolverConfig(dt=1 / 16),
                                   SolverConfig(dt=1 / 16, norm_blowup_threshold=1e-3))
