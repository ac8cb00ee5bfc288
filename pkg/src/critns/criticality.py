"""Critical-norm monitoring and inequality audits.

Every audit is phrased as a defect functional: a signed or nonnegative number
that is compared against an explicit tolerance by the caller. No routine here
asserts a value for an unmeasured constant.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .errors import CoverageError, DomainError
from .operators import pressure_from_velocity
from .spectral_field import (
    GridSpec,
    SpectralField,
    irfft3,
    periodic_offset,
    sobolev_norms,
    to_physical,
)
from .trajectory import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormRecord:
    """Instantaneous norms of ``u(t)`` plus trapezoid-accumulated integrals.

    ``l5`` is the instantaneous ``||u(t)||_5`` needed to advance
    ``cum_l5_pow5``.
    """

    t: float
    l2: float
    hdot_half: float
    hdot_one: float
    hdot_threehalf: float
    l3: float
    l5: float
    linf: float
    sqrt_t_linf: float
    cum_l5_pow5: float
    cum_f4_pow4: float
    cum_grad_hhalf_sq: float

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def record(u: SpectralField, t: float, prev: NormRecord | None = None) -> NormRecord:
    """Norms of ``u`` at time ``t``; integrals advanced from ``prev`` by trapezoid."""
    if prev is not None and t < prev.t:
        raise DomainError(f"record time {t} precedes previous record at {prev.t}")
    l2, hh, h1, h32 = sobolev_norms(u, (0.0, 0.5, 1.0, 1.5))
    v = to_physical(u).values
    mag = np.sqrt(np.sum(v * v, axis=0))
    top = float(np.max(mag))
    dv = u.grid.cell_volume
    if top > 0:
        l3 = top * float(np.sum((mag / top) ** 3) * dv) ** (1 / 3)
        l5 = top * float(np.sum((mag / top) ** 5) * dv) ** (1 / 5)
    else:
        l3 = l5 = 0.0
    if prev is None:
        cum5 = cum4 = cumg = 0.0
    else:
        h = t - prev.t
        cum5 = prev.cum_l5_pow5 + 0.5 * h * (prev.l5**5 + l5**5)
        cum4 = prev.cum_f4_pow4 + 0.5 * h * (prev.hdot_one**4 + h1**4)
        cumg = prev.cum_grad_hhalf_sq + 0.5 * h * (prev.hdot_threehalf**2 + h32**2)
    return NormRecord(
        t=float(t), l2=l2, hdot_half=hh, hdot_one=h1, hdot_threehalf=h32,
        l3=l3, l5=l5, linf=top, sqrt_t_linf=float(np.sqrt(max(t, 0.0))) * top,
        cum_l5_pow5=cum5, cum_f4_pow4=cum4, cum_grad_hhalf_sq=cumg,
    )


# --- space-time norms -------------------------------------------------------

def _locate(traj: Trajectory, T: float) -> tuple[int, float]:
    """Index ``j`` with ``t_j <= T`` and the fraction of interval ``j`` covered."""
    if T < 0 or not traj.covers(T):
        raise CoverageError(f"T = {T} outside the trajectory range [0, {traj.final_time}]")
    times = traj.times
    j = int(np.searchsorted(times, T, side="right")) - 1
    j = min(max(j, 0), len(times) - 1)
    if j == len(times) - 1 or abs(T - times[j]) <= 1e-12 * max(1.0, T):
        return j, 0.0
    return j, (T - times[j]) / (times[j + 1] - times[j])


def _cumulative(traj: Trajectory, T: float, cum: str, integrand) -> float:
    j, theta = _locate(traj, T)
    recs = traj.records
    base = getattr(recs[j], cum)
    if theta == 0.0:
        return base
    a, b = integrand(recs[j]), integrand(recs[j + 1])
    h = traj.times[j + 1] - traj.times[j]
    mid = a + theta * (b - a)
    return base + 0.5 * theta * h * (a + mid)


def _sup(traj: Trajectory, T: float, name: str) -> float:
    j, theta = _locate(traj, T)
    vals = traj.norm_series(name)
    best = float(np.max(vals[: j + 1]))
    if theta > 0:
        best = max(best, float(vals[j] + theta * (vals[j + 1] - vals[j])))
    return best


def e_norm(traj: Trajectory, T: float) -> float:
    """``(sup_{t<=T} ||u||_{H^1/2}^2 + int_0^T ||u||_{H^3/2}^2)^{1/2}``."""
    sup = _sup(traj, T, "hdot_half")
    grad = _cumulative(traj, T, "cum_grad_hhalf_sq", lambda r: r.hdot_threehalf**2)
    return float(np.sqrt(sup**2 + grad))


def f_norm(traj: Trajectory, T: float) -> float:
    """``(int_0^T ||u||_{H^1}^4)^{1/4}``."""
    return float(_cumulative(traj, T, "cum_f4_pow4", lambda r: r.hdot_one**4) ** 0.25)


def l5_spacetime(traj: Trajectory, T: float) -> float:
    """``(int_0^T ||u||_5^5)^{1/5}``."""
    return float(_cumulative(traj, T, "cum_l5_pow5", lambda r: r.l5**5) ** 0.2)


def f_interpolation_bound(traj: Trajectory, T: float) -> float:
    """Right side of ``||u||_F <= (sup H^1/2)^{1/2} (L^2 H^3/2)^{1/2}``."""
    sup = _sup(traj, T, "hdot_half")
    grad = _cumulative(traj, T, "cum_grad_hhalf_sq", lambda r: r.hdot_threehalf**2)
    return float(np.sqrt(sup) * grad**0.25)


def l5_interpolation_ratio(traj: Trajectory, T: float) -> float:
    """``||u||_{L^5} / (sup H^1/2)^{3/5} (L^2 H^3/2)^{2/5}``; nan when undefined."""
    sup = _sup(traj, T, "hdot_half")
    grad = _cumulative(traj, T, "cum_grad_hhalf_sq", lambda r: r.hdot_threehalf**2)
    den = sup**0.6 * np.sqrt(grad) ** 0.4
    return float(l5_spacetime(traj, T) / den) if den > 0 else float("nan")


class WeightedSup(NamedTuple):
    value: float
    tail: float


def weighted_sup(traj: Trajectory, T: float) -> WeightedSup:
    """Max of ``sqrt(t) ||u(t)||_inf`` over records up to ``T``, and over ``t <= T/100``."""
    j, _ = _locate(traj, T)
    vals = traj.norm_series("sqrt_t_linf")[: j + 1]
    tail = vals[traj.times[: j + 1] <= T / 100.0]
    return WeightedSup(float(np.max(vals)), float(np.max(tail)) if tail.size else 0.0)


class BilinearConstants(NamedTuple):
    eta_f: float
    eta_5: float


def bilinear_constants(
    grid: GridSpec,
    T_values: Sequence[float],
    trials: int,
    seed: int = 0,
    band: tuple[float, float] = (1.0, 3.0),
    slope: float = 0.0,
    dt: float = 1.0 / 64.0,
) -> dict[float, BilinearConstants]:
    """Largest observed ``||B(f,g)|| / (||f|| ||g||)`` in the ``F`` and ``L^5`` space-time norms.

    ``f`` and ``g`` are heat flows of random band-limited solenoidal data
    (continuum data, so every grid sees the same samples). Pairs are the
    first ``trials`` distinct pairs from the smallest pool of flows that has
    enough of them. One Duhamel lattice
    up to ``max(T_values)`` serves every window, since ``B`` on ``[0, T]``
    only depends on the inputs on ``[0, T]``.
    """
    from .operators import QuadratureRule, _WeightCache, duhamel_lattice
    from .symmetry_profiles import AnalyticDatum, sample_datum

    T_max = max(T_values)
    steps = int(round(T_max / dt))
    times = np.linspace(0.0, T_max, steps + 1)
    for T in T_values:
        if abs(T / dt - round(T / dt)) > 1e-9:
            raise DomainError(f"window {T} is not a multiple of dt = {dt}")
    decay = np.exp(-np.multiply.outer(times, grid.wavenumbers.k2))[:, None]
    cache = _WeightCache(grid, QuadratureRule())
    best = {T: [0.0, 0.0] for T in T_values}

    def heat_flow(k: int) -> tuple[np.ndarray, Trajectory]:
        a = sample_datum(AnalyticDatum.band_limited_random(seed + k, slope, band), grid)
        stack = decay * a.coeffs[None]
        return stack, Trajectory.from_snapshots(grid, times, [SpectralField(grid, c) for c in stack])

    pool = 2
    while pool * (pool - 1) // 2 < trials:
        pool += 1
    flows = [heat_flow(k) for k in range(pool)]
    pairs = [(i, j) for i in range(pool) for j in range(i + 1, pool)][:trials]
    for i, j in pairs:
        (fs, ft), (gs, gt) = flows[i], flows[j]
        out = duhamel_lattice(fs, gs, times, grid, cache.rule, cache)
        bt = Trajectory.from_snapshots(grid, times, [SpectralField(grid, c) for c in out])
        for T in T_values:
            nf = f_norm(ft, T) * f_norm(gt, T)
            n5 = l5_spacetime(ft, T) * l5_spacetime(gt, T)
            best[T][0] = max(best[T][0], f_norm(bt, T) / nf)
            best[T][1] = max(best[T][1], l5_spacetime(bt, T) / n5)
    return {T: BilinearConstants(*v) for T, v in best.items()}


# --- energy and decay ---------------------------------------------------------

def energy_audit(traj: Trajectory) -> float:
    """``max_t [ ||u(t)||^2_{H^1/2} + int_0^t ||grad u||^2_{H^1/2} - ||u_0||^2_{H^1/2} ]``.

    The gradient term is evaluated as ``||u||_{H^3/2}^2``. A value at or below
    the quadrature tolerance means the inequality holds on the lattice.
    """
    hh = traj.norm_series("hdot_half")
    cum = traj.norm_series("cum_grad_hhalf_sq")
    return float(np.max(hh**2 + cum - hh[0] ** 2))


def trapezoid_error_bound(times: np.ndarray, values: np.ndarray) -> float:
    """Composite-trapezoid error estimate ``sum h^3 |f''| / 12`` from second differences."""
    t = np.asarray(times, float)
    f = np.asarray(values, float)
    if t.size < 3:
        return 0.0
    h = np.diff(t)
    d2 = 2.0 * (f[2:] * h[:-1] - f[1:-1] * (h[:-1] + h[1:]) + f[:-2] * h[1:]) / (h[:-1] * h[1:] * (h[:-1] + h[1:]))
    curv = np.concatenate([[abs(d2[0])], np.maximum(np.abs(d2[:-1]), np.abs(d2[1:])), [abs(d2[-1])]])
    return float(np.sum(h**3 * curv) / 12.0)


def energy_quadrature_bound(traj: Trajectory) -> float:
    """Trapezoid error bound of the dissipation integral plus a roundoff floor."""
    vals = traj.norm_series("hdot_threehalf") ** 2
    floor = 64 * np.finfo(float).eps * (traj.records[0].hdot_half ** 2 + float(np.sum(vals) * traj.final_time / max(len(vals), 1)))
    return trapezoid_error_bound(traj.times, vals) + floor


def l2_energy_defect(traj: Trajectory) -> float:
    """``max_t | ||u(t)||_2^2 + 2 int_0^t ||grad u||_2^2 - ||u_0||_2^2 |``."""
    l2 = traj.norm_series("l2")
    g = traj.norm_series("hdot_one") ** 2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(traj.times) * (g[1:] + g[:-1]))])
    return float(np.max(np.abs(l2**2 + 2.0 * cum - l2[0] ** 2)))


def l2_energy_quadrature_bound(traj: Trajectory) -> float:
    g = traj.norm_series("hdot_one") ** 2
    floor = 64 * np.finfo(float).eps * traj.records[0].l2 ** 2 * len(g)
    return 2.0 * trapezoid_error_bound(traj.times, g) + floor


@dataclass(frozen=True)
class DecayReport:
    initial: float
    final: float
    window_max: float
    monotone_after: float | None


def decay_audit(traj: Trajectory) -> DecayReport:
    """Initial, final and maximal ``H^1/2`` norm, and the time after which it never grows."""
    hh = traj.norm_series("hdot_half")
    slack = 1e-13 * max(float(np.max(hh)), 1e-300)
    grows = np.nonzero(np.diff(hh) > slack)[0]
    if grows.size == 0:
        after = float(traj.times[0])
    elif grows[-1] + 1 < len(hh) - 1:
        after = float(traj.times[grows[-1] + 1])
    else:
        after = None
    return DecayReport(float(hh[0]), float(hh[-1]), float(np.max(hh)), after)


@dataclass(frozen=True)
class BlowupMonitor:
    """Pairing used for reporting: is ``sup H^1/2`` finite, and how fast does E_T grow."""

    sup_hdot_half: float
    e_norm: float
    e_norm_growth: float
    l5_spacetime: float


def blowup_monitor(traj: Trajectory) -> BlowupMonitor:
    T = traj.final_time
    e = e_norm(traj, T)
    half = e_norm(traj, T / 2) if T > 0 else e
    return BlowupMonitor(
        sup_hdot_half=float(np.max(traj.norm_series("hdot_half"))),
        e_norm=e,
        e_norm_growth=float(e / half) if half > 0 else float("nan"),
        l5_spacetime=l5_spacetime(traj, T),
    )


# --- local quantities ------------------------------------------------------------

def _point_evaluator(coeffs: np.ndarray, grid: GridSpec, xy: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Evaluate fields at points ``(xy[m], z[m, c])`` by direct Fourier summation.

    ``coeffs`` has shape ``(F, n, n, n/2+1)``; returns ``(F, M, C)``.
    """
    wn = grid.wavenumbers
    kx, ky, kz = (a.ravel() for a in wn.k)
    n = grid.n_modes
    exy = np.exp(1j * (xy[:, 0:1] * kx[None, :]))[:, :, None] * np.exp(1j * (xy[:, 1:2] * ky[None, :]))[:, None, :]
    exy = exy.reshape(xy.shape[0], n * n)
    wz = wn.weight.ravel()
    ez = np.exp(1j * z[:, :, None] * kz[None, None, :]) * wz
    out = []
    for c in coeffs:
        s = exy @ c.reshape(n * n, -1)
        out.append(np.einsum("mk,mck->mc", s, ez).real)
    return np.stack(out)


def _ball_rule(r: float, n_alpha: int = 24, n_phi: int = 48, n_zeta: int = 24):
    """Nodes and weights for a ball of radius ``r`` in stretched cylindrical coordinates.

    ``rho = r sin(a)``, ``z = r cos(a) zeta``; Jacobian ``r^3 sin(a) cos(a)^2``.
    """
    xa, wa = np.polynomial.legendre.leggauss(n_alpha)
    alpha = 0.25 * np.pi * (xa + 1.0)
    wa = 0.25 * np.pi * wa
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    zeta, wz = np.polynomial.legendre.leggauss(n_zeta)
    rho = r * np.sin(alpha)
    xy = np.stack([(rho[:, None] * np.cos(phi)[None, :]).ravel(),
                   (rho[:, None] * np.sin(phi)[None, :]).ravel()], axis=1)
    zz = r * np.cos(alpha)[:, None] * zeta[None, :]
    z = np.repeat(zz, n_phi, axis=0)
    w_alpha = r**3 * np.sin(alpha) * np.cos(alpha) ** 2 * wa * (2.0 * np.pi / n_phi)
    w = np.repeat(w_alpha, n_phi)[:, None] * wz[None, :]
    return xy, z, w


def _ball_integral(u: SpectralField, center: Sequence[float], r: float) -> float:
    p = pressure_from_velocity(u)
    xy, z, w = _ball_rule(r)
    xy = xy + np.asarray(center[:2], float)
    z = z + float(center[2])
    stack = np.concatenate([u.coeffs, p.coeffs[None]])
    vals = _point_evaluator(stack, u.grid, xy, z)
    speed = np.sqrt(np.sum(vals[:3] ** 2, axis=0))
    dens = speed**3 + np.abs(vals[3]) ** 1.5
    return float(np.sum(dens * w))


def local_smallness(
    u_traj: Trajectory,
    center: Sequence[float],
    r: float,
    t_end: float,
    normalize: bool = True,
) -> float:
    """Integral of ``|u|^3 + |p|^{3/2}`` over ``B_r(center) x (t_end - r^2, t_end)``.

    With ``normalize`` the value is divided by ``r^2``, which is the integral
    of the rescaled pair over the unit cylinder. The ball integral uses a
    cylindrical product rule with spectral point evaluation; the time integral
    integrates a cubic spline through the snapshots.
    """
    grid = u_traj.grid
    if r <= 0 or r > grid.box_length / 4:
        raise DomainError(f"cylinder radius {r} must lie in (0, L/4]")
    t0 = t_end - r * r
    if t0 < u_traj.times[0] - 1e-12 or not u_traj.covers(t_end):
        raise CoverageError(f"cylinder ({t0}, {t_end}) outside the sampled range")
    times = u_traj.times
    lo = max(int(np.searchsorted(times, t0, side="right")) - 2, 0)
    hi = min(int(np.searchsorted(times, t_end, side="left")) + 2, len(times))
    idx = range(lo, hi)
    vals = np.array([_ball_integral(u_traj.snapshots[i], center, r) for i in idx])
    ts = times[lo:hi]
    if ts.size >= 4:
        total = float(CubicSpline(ts, vals).integrate(max(t0, 0.0), t_end))
    else:
        grid_t = np.linspace(max(t0, 0.0), t_end, 65)
        total = float(trapezoid(np.interp(grid_t, ts, vals), grid_t))
    return total / (r * r) if normalize else total


@dataclass(frozen=True)
class CutoffSpec:
    """Tensor bump ``A chi(t) prod_j cos^{2m}(pi (x_j - c_j) / (2a))`` on ``|x_j - c_j| < a``.

    ``chi`` is 0 before ``t_on``, rises by a quintic smoothstep over
    ``t_ramp`` and is 1 afterwards.
    """

    center: tuple[float, float, float]
    radius: float
    power: int = 4
    t_on: float = 0.1
    t_ramp: float = 0.2
    amplitude: float = 1.0

    def chi(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.clip((np.asarray(t, float) - self.t_on) / self.t_ramp, 0.0, 1.0)
        val = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
        der = 30.0 * s * s * (1.0 - s) ** 2 / self.t_ramp
        return self.amplitude * val, self.amplitude * der

    def spatial(self, grid: GridSpec) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
        """Cutoff, its gradient and its Laplacian on the grid."""
        L = grid.box_length
        x = grid.coordinates()
        k = np.pi / (2.0 * self.radius)
        m2 = 2 * self.power
        b, db, d2b = [], [], []
        for c in self.center:
            y = periodic_offset(x, float(c), L)
            inside = np.abs(y) < self.radius
            cs, sn = np.cos(k * y), np.sin(k * y)
            b.append(np.where(inside, cs**m2, 0.0))
            db.append(np.where(inside, -m2 * k * cs ** (m2 - 1) * sn, 0.0))
            d2b.append(np.where(inside, k * k * (m2 * (m2 - 1) * cs ** (m2 - 2) * sn**2 - m2 * cs**m2), 0.0))

        def outer(a, bb, c):
            return a[:, None, None] * bb[None, :, None] * c[None, None, :]

        phi = outer(b[0], b[1], b[2])
        grad = [outer(db[0], b[1], b[2]), outer(b[0], db[1], b[2]), outer(b[0], b[1], db[2])]
        lap = outer(d2b[0], b[1], b[2]) + outer(b[0], d2b[1], b[2]) + outer(b[0], b[1], d2b[2])
        return phi, grad, lap


def _validate_cutoff(traj: Trajectory, cutoff: CutoffSpec, t: float) -> None:
    if cutoff.radius <= 0 or cutoff.radius > traj.grid.box_length / 2 + 1e-12:
        raise DomainError("cutoff radius must lie in (0, L/2]")
    if cutoff.power < 2:
        raise DomainError("cutoff power must be at least 2 for a C^2 bump")
    if cutoff.t_ramp <= 0:
        raise DomainError("cutoff ramp must be positive")
    if cutoff.t_on <= traj.times[0]:
        raise DomainError("cutoff must vanish near the initial time of the window")
    if cutoff.amplitude < 0:
        raise DomainError("cutoff must be nonnegative")
    traj.require(t)


def _local_energy_integrands(traj: Trajectory, cutoff: CutoffSpec, idx: Sequence[int]) -> np.ndarray:
    """Per-snapshot ``(A, G, D, F)``: ``int phi|u|^2``, ``int phi|grad u|^2``,
    ``int |u|^2 Lap phi`` and ``int u.grad phi (|u|^2 + 2p)`` (spatial cutoff only)."""
    grid = traj.grid
    phi, gphi, lphi = cutoff.spatial(grid)
    kd = grid.wavenumbers.kd
    dv = grid.cell_volume
    out = np.zeros((len(idx), 4))
    for row, i in enumerate(idx):
        u = traj.snapshots[i]
        up = irfft3(u.coeffs, grid.n_modes)
        grads = irfft3(np.stack([1j * kd[j] * u.coeffs for j in range(3)]), grid.n_modes)
        p = irfft3(pressure_from_velocity(u).coeffs, grid.n_modes)
        u2 = np.sum(up * up, axis=0)
        out[row, 0] = np.sum(phi * u2) * dv
        out[row, 1] = np.sum(phi * np.sum(grads * grads, axis=(0, 1))) * dv
        out[row, 2] = np.sum(u2 * lphi) * dv
        flux = sum(up[j] * gphi[j] for j in range(3))
        out[row, 3] = np.sum(flux * (u2 + 2.0 * p)) * dv
    return out


def _balance_from(times: np.ndarray, vals: np.ndarray, cutoff: CutoffSpec, t: float) -> tuple[float, float]:
    """Defect and the sum of absolute term sizes for a sampled window ending at ``t``."""
    chi, dchi = cutoff.chi(times)
    A, G, D, F = vals.T
    integrand = chi * (2.0 * G - D - F) - dchi * A
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(j, len(times) - 1)
    total = float(trapezoid(integrand[: j + 1], times[: j + 1]))
    a_t = A[j]
    if times[j] < t and j + 1 < len(times):
        theta = (t - times[j]) / (times[j + 1] - times[j])
        mid = integrand[j] + theta * (integrand[j + 1] - integrand[j])
        total += 0.5 * (t - times[j]) * (integrand[j] + mid)
        a_t = A[j] + theta * (A[j + 1] - A[j])
    chi_t, _ = cutoff.chi(np.array([t]))
    scale = float(trapezoid(np.abs(chi * 2.0 * G) + np.abs(chi * D) + np.abs(chi * F) + np.abs(dchi * A), times))
    return float(chi_t[0] * a_t + total), abs(float(chi_t[0] * a_t)) + scale


def local_energy_balance(u_traj: Trajectory, cutoff: CutoffSpec, t: float) -> float:
    """Left minus right side of the local energy inequality at time ``t``.

    Spatial integrals use the grid; time integrals the trapezoid rule on the
    snapshot lattice. For smooth solutions the value is zero up to quadrature
    error (see :func:`local_energy_quadrature_error`).
    """
    _validate_cutoff(u_traj, cutoff, t)
    last = min(int(np.searchsorted(u_traj.times, t, side="right")), len(u_traj) - 1)
    idx = range(0, last + 1)
    vals = _local_energy_integrands(u_traj, cutoff, idx)
    return _balance_from(u_traj.times[: last + 1], vals, cutoff, t)[0]


def local_energy_quadrature_error(u_traj: Trajectory, cutoff: CutoffSpec, t: float) -> float:
    """Richardson estimate ``|D_h - D_2h| / 3`` of the time-quadrature error plus a roundoff floor."""
    _validate_cutoff(u_traj, cutoff, t)
    last = min(int(np.searchsorted(u_traj.times, t, side="right")), len(u_traj) - 1)
    idx = list(range(0, last + 1))
    vals = _local_energy_integrands(u_traj, cutoff, idx)
    times = u_traj.times[: last + 1]
    fine, scale = _balance_from(times, vals, cutoff, t)
    sub = list(range(0, last + 1, 2))
    if sub[-1] != last:
        sub.append(last)
    coarse, _ = _balance_from(times[sub], vals[sub], cutoff, t)
    return abs(fine - coarse) / 3.0 + 256 * np.finfo(float).eps * scale
