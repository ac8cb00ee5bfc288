"""Mild-solution trajectories by two independent routes.

``integrate_interval`` runs the fixed-point iteration for the whole time
window at once, with space-time iterates on a uniform lattice. ``solve``
marches step by step with an exponential collocation rule. The two share no
time-stepping code, so their agreement is a meaningful uniqueness witness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .contraction import BilinearFixedPointProblem, solve_fixed_point
from .criticality import record
from .errors import DomainError, IncomparableError, StepFailure
from .operators import QuadratureRule, _WeightCache, duhamel_lattice, projected_nonlinearity
from .spectral_field import GridSpec, SpectralField, divergence_ratio, lebesgue_norm
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

DIVERGENCE_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping and iteration controls.

    ``min_dt`` defaults to ``dt / 1024``. ``picard_tol`` is an absolute
    tolerance in the (scale-invariant) ``H^1/2`` norm for single steps and in
    the ``E_T`` norm for whole-interval iteration.
    """

    dt: float = 1.0 / 64.0
    duhamel_quadrature: QuadratureRule = field(default_factory=QuadratureRule)
    picard_tol: float = 1e-12
    picard_max_iter: int = 50
    norm_blowup_threshold: float = 1e3
    min_dt: float | None = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.min_dt is None:
            object.__setattr__(self, "min_dt", self.dt / 1024.0)
        if not 0 < self.min_dt <= self.dt:
            raise ValueError("min_dt must lie in (0, dt]")
        if not self.picard_tol > 0 or not self.norm_blowup_threshold > 0:
            raise ValueError("tolerances and thresholds must be positive")
        if int(self.picard_max_iter) < 1:
            raise ValueError("picard_max_iter must be positive")


def _check_datum(u0: SpectralField) -> None:
    if u0.comp_shape != (3,):
        raise DomainError("initial datum must be a vector field")
    if abs(u0.coeffs[..., 0, 0, 0]).max() > 0:
        raise DomainError("initial datum must be mean-free")
    ratio = divergence_ratio(u0)
    if ratio > DIVERGENCE_TOL:
        raise DomainError(f"initial datum is not divergence-free (ratio {ratio:.2e})")


def _lattice(T: float, dt: float) -> np.ndarray:
    n = int(math.floor(T / dt + 1e-9))
    times = np.arange(n + 1) * dt
    if T - times[-1] > 1e-12 * max(1.0, T):
        times = np.append(times, T)
    else:
        times[-1] = T if n > 0 else 0.0
    return times


# --- whole-interval route -------------------------------------------------------

class _SpaceTime:
    """Coefficient stack ``(n_t, 3, ...)`` with value semantics for the iteration."""

    __slots__ = ("c",)

    def __init__(self, c: np.ndarray):
        self.c = c

    def __add__(self, other: "_SpaceTime") -> "_SpaceTime":
        return _SpaceTime(self.c + other.c)

    def __sub__(self, other: "_SpaceTime") -> "_SpaceTime":
        return _SpaceTime(self.c - other.c)


def _e_norm_stack(c: np.ndarray, times: np.ndarray, grid: GridSpec) -> float:
    wn = grid.wavenumbers
    a = np.sum(np.abs(c) ** 2, axis=1) * wn.weight
    hh2 = np.sum(a * wn.kmag, axis=(1, 2, 3)) * grid.volume
    h32 = np.sum(a * wn.kmag**3, axis=(1, 2, 3)) * grid.volume
    integral = float(np.sum(0.5 * np.diff(times) * (h32[1:] + h32[:-1]))) if times.size > 1 else 0.0
    return float(np.sqrt(np.max(hh2) + integral))


def integrate_interval(u0: SpectralField, T: float, cfg: SolverConfig) -> Trajectory:
    """Whole-interval iteration ``u <- e^{t Lap} u0 + B(u, u)`` on a uniform lattice.

    Convergence is measured in the discrete ``E_T`` norm. On failure the
    returned trajectory holds only the initial snapshot, with
    ``terminated_reason = "picard_failure"`` and the failed interval length
    under ``info["failed_interval"]``.
    """
    _check_datum(u0)
    if not T > 0:
        raise DomainError("T must be positive")
    grid = u0.grid
    times = _lattice(T, cfg.dt)
    k2 = grid.wavenumbers.k2
    y = _SpaceTime(np.stack([u0.coeffs * np.exp(-k2 * t) for t in times]))
    cache = _WeightCache(grid, cfg.duhamel_quadrature)

    def bilinear(a: _SpaceTime, b: _SpaceTime) -> _SpaceTime:
        return _SpaceTime(duhamel_lattice(a.c, None if a is b else b.c, times, grid,
                                          cfg.duhamel_quadrature, cache))

    problem = BilinearFixedPointProblem(
        y=y, bilinear=bilinear, eta=None, tol=cfg.picard_tol,
        max_iter=cfg.picard_max_iter, norm=lambda v: _e_norm_stack(v.c, times, grid),
    )
    res = solve_fixed_point(problem)
    info = {"route": "interval", "picard_iterations": res.iterations,
            "picard_residual": res.residual, "residual_history": res.residual_history}
    if not res.converged:
        info["failed_interval"] = float(T)
        logger.warning("interval iteration failed",
                       extra={"diagnostic": {"T": T, "iterations": res.iterations,
                                             "residual": res.residual}})
        return Trajectory.from_snapshots(grid, [0.0], [u0], "picard_failure", info)
    snaps = [SpectralField(grid, res.solution.c[i], divergence_free=True) for i in range(times.size)]
    return Trajectory.from_snapshots(grid, times, snaps, "horizon_reached", info)


# --- stepwise route ----------------------------------------------------------------

@dataclass(frozen=True)
class _StepWeights:
    e_half: np.ndarray
    e_full: np.ndarray
    w_half: np.ndarray
    w_full: np.ndarray


def _lagrange(theta: np.ndarray) -> np.ndarray:
    return np.stack([
        2.0 * (theta - 0.5) * (theta - 1.0),
        -4.0 * theta * (theta - 1.0),
        2.0 * theta * (theta - 0.5),
    ])


@lru_cache(maxsize=64)
def _step_weights(grid: GridSpec, h: float, rule: QuadratureRule) -> _StepWeights:
    """Exponential weights for quadratic interpolation of the forcing at 0, h/2, h."""
    x, w = rule.unit_rule()
    k2 = grid.wavenumbers.k2
    out = []
    for tau in (0.5, 1.0):
        basis = _lagrange(tau * x)
        W = np.zeros((3,) + k2.shape)
        for q in range(x.size):
            e = np.exp(-k2 * (h * tau * (1.0 - x[q])))
            for m in range(3):
                W[m] += (h * tau * w[q] * basis[m, q]) * e
        out.append(W)
    return _StepWeights(np.exp(-k2 * h / 2), np.exp(-k2 * h), out[0], out[1])


def _hhalf(c: np.ndarray, grid: GridSpec) -> float:
    wn = grid.wavenumbers
    return float(np.sqrt(np.sum(np.abs(c) ** 2 * wn.weight * wn.kmag) * grid.volume))


def step(u: SpectralField, dt: float, cfg: SolverConfig) -> SpectralField:
    """Advance ``u`` by ``dt`` with a three-node exponential collocation rule.

    The forcing ``-P div(u (x) u)`` is interpolated quadratically in time
    through its values at the start, middle and end of the step; the two
    unknown stage values are closed by fixed-point iteration.

    Raises:
        StepFailure: if the closure diverges, stalls or produces non-finite values.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    grid = u.grid
    W = _step_weights(grid, float(dt), cfg.duhamel_quadrature)
    c0 = u.coeffs
    n0 = projected_nonlinearity(c0, grid)
    uh = W.e_half * c0 + W.w_half.sum(axis=0) * n0
    uf = W.e_full * c0 + W.w_full.sum(axis=0) * n0
    prev = math.inf
    for it in range(int(cfg.picard_max_iter)):
        nh = projected_nonlinearity(uh, grid)
        nf = projected_nonlinearity(uf, grid)
        uh_new = W.e_half * c0 + W.w_half[0] * n0 + W.w_half[1] * nh + W.w_half[2] * nf
        uf_new = W.e_full * c0 + W.w_full[0] * n0 + W.w_full[1] * nh + W.w_full[2] * nf
        inc = max(_hhalf(uh_new - uh, grid), _hhalf(uf_new - uf, grid))
        uh, uf = uh_new, uf_new
        if not math.isfinite(inc) or not np.all(np.isfinite(uf)):
            raise StepFailure("non-finite values in step closure", it + 1, inc)
        tol = max(cfg.picard_tol, 1e-14 * _hhalf(uf, grid))
        if inc <= tol:
            return SpectralField(grid, uf, divergence_free=True)
        if it >= 3 and inc >= prev:
            raise StepFailure("step closure is not contracting", it + 1, inc)
        prev = inc
    raise StepFailure("step closure exhausted its iteration budget", int(cfg.picard_max_iter), prev)


def solve(u0: SpectralField, horizon: float, cfg: SolverConfig) -> Trajectory:
    """March to ``horizon``, halving ``dt`` on step failure.

    Declares ``blowup_detected`` when the ``H^1/2`` norm passes the threshold
    or the step size would drop below ``min_dt``; ``info["t_star_estimate"]``
    then holds the last successful time. After a success the step size is
    doubled again, capped at ``cfg.dt``.
    """
    _check_datum(u0)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    grid = u0.grid
    t = 0.0
    u = u0
    times, snaps = [0.0], [u0]
    recs = [record(u0, 0.0)]
    dt = cfg.dt
    reason = "horizon_reached"
    failures = 0
    eps_t = 1e-12 * max(1.0, horizon)
    while horizon - t > eps_t:
        h = min(dt, horizon - t)
        try:
            un = step(u, h, cfg)
        except StepFailure as exc:
            failures += 1
            logger.info("step failed; halving dt",
                        extra={"diagnostic": {"t": t, "dt": h, "reason": str(exc)}})
            dt = h / 2.0
            if dt < cfg.min_dt:
                reason = "blowup_detected"
                break
            continue
        t = horizon if horizon - (t + h) <= eps_t else t + h
        u = un
        rec = record(u, t, recs[-1])
        times.append(t)
        snaps.append(u)
        recs.append(rec)
        if not math.isfinite(rec.hdot_half) or rec.hdot_half > cfg.norm_blowup_threshold:
            reason = "blowup_detected"
            break
        dt = min(2.0 * dt, cfg.dt)
    info = {"route": "stepwise", "step_failures": failures}
    if reason == "blowup_detected":
        info["t_star_estimate"] = t
        logger.warning("blow-up indicator triggered", extra={"diagnostic": {"t": t}})
    return Trajectory(grid, np.array(times), snaps, recs, reason, info)


def cross_check_uniqueness(
    u0: SpectralField,
    T: float,
    cfgA: SolverConfig,
    cfgB: SolverConfig,
    at_times: Sequence[float] | None = None,
) -> float:
    """Largest ``L^3`` distance between the two routes at their shared times.

    Route A is :func:`integrate_interval` with ``cfgA``; route B is
    :func:`solve` with ``cfgB``. ``at_times`` restricts the comparison to a
    fixed subset of the shared times, which keeps the sample set constant
    across a step-size sweep.

    Raises:
        IncomparableError: if either route stops early, no times are shared,
            or a requested time is missing from either lattice.
    """
    a = integrate_interval(u0, T, cfgA)
    b = solve(u0, T, cfgB)
    for name, tr in (("interval", a), ("stepwise", b)):
        if tr.terminated_reason != "horizon_reached":
            raise IncomparableError(f"{name} route ended with {tr.terminated_reason}")
    def find(tr: Trajectory, t: float) -> int | None:
        j = int(np.argmin(np.abs(tr.times - t)))
        return j if abs(tr.times[j] - t) <= 1e-12 * max(1.0, t) else None

    worst = 0.0
    shared = 0
    for t in (a.times if at_times is None else at_times):
        i, j = find(a, t), find(b, t)
        if i is None or j is None:
            if at_times is not None:
                raise IncomparableError(f"time {t} is not on both lattices")
            continue
        shared += 1
        worst = max(worst, lebesgue_norm(a.snapshots[i] - b.snapshots[j], 3))
    if shared == 0:
        raise IncomparableError("the two routes share no snapshot times")
    return worst
