import math

import numpy as np
import pytest
from scipy import integrate

from critns.mild_solver import SolverConfig, solve
from critns.spectral_field import GridSpec, random_band_limited
from critns.symmetry_profiles import AnalyticDatum, sample_datum

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(16)


@pytest.fixture
def random_field(rng, grid16):
    return random_band_limited(grid16, rng, 4.0)


@pytest.fixture(scope="session")
def tg_trajectory():
    """Taylor-Green on 32^3 to t = 1 with dt = 1/256."""
    g = GridSpec(32)
    u0 = sample_datum(AnalyticDatum.taylor_green(), g)
    return solve(u0, 1.0, SolverConfig(dt=1.0 / 256.0))


@pytest.fixture(scope="session")
def tg_short():
    g = GridSpec(16)
    u0 = sample_datum(AnalyticDatum.taylor_green(), g)
    return solve(u0, 0.25, SolverConfig(dt=1.0 / 64.0))


TWO_PI = 2.0 * math.pi


def tg_smallness_oracle(r, t_end):
    """Ball integral of |u|^3 + |p|^{3/2} at a stagnation point, by adaptive quadrature.

    Both terms are z-independent and carry the time factor e^{-6t}; the
    z-extent of the ball at polar radius rho is 2 sqrt(r^2 - rho^2).
    """
    def dens(a, phi):
        rho = r * math.sin(a)
        x, y = rho * math.cos(phi), rho * math.sin(phi)
        u2 = math.sin(x) ** 2 * math.cos(y) ** 2 + math.cos(x) ** 2 * math.sin(y) ** 2
        p = (math.cos(2 * x) + math.cos(2 * y)) / 4
        return (u2**1.5 + abs(p) ** 1.5) * rho * 2 * r * r * math.cos(a) ** 2

    space, _ = integrate.dblquad(dens, 0, 2 * math.pi, 0, math.pi / 2, epsabs=1e-14, epsrel=1e-13)
    t0 = t_end - r * r
    return space * (math.exp(-6 * t0) - math.exp(-6 * t_end)) / 6 / (r * r)
