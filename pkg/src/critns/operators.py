"""Fourier-side operators of the mild formulation.

Every routine returns a new field; inputs are never modified. Products are
formed in physical space from inputs truncated to the dealiased set, and the
result is truncated again, so quadratic terms are free of aliasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DomainError
from .spectral_field import (
    GridSpec,
    SpectralField,
    divergence_ratio,
    irfft3,
    rfft3,
    sobolev_norm,
)
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

DIVERGENCE_WARN = 1e-8
RESIDUAL_EPS = 1e-14
_SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class QuadratureRule:
    """Rule for the Duhamel time integral on each snapshot interval."""

    kind: str = "gauss-legendre"
    nodes: int = 8

    def __post_init__(self) -> None:
        if self.kind not in ("midpoint", "gauss-legendre"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if int(self.nodes) != self.nodes or self.nodes < 4:
            raise ValueError("a quadrature rule needs at least 4 nodes")

    def unit_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on [0, 1]."""
        return _unit_rule(self.kind, int(self.nodes))


@lru_cache(maxsize=16)
def _unit_rule(kind: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    if kind == "midpoint":
        x = (np.arange(n) + 0.5) / n
        w = np.full(n, 1.0 / n)
    else:
        x, w = np.polynomial.legendre.leggauss(n)
        x, w = 0.5 * (x + 1.0), 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


# --- linear multipliers ------------------------------------------------------

def heat_semigroup(f: SpectralField, t: float) -> SpectralField:
    """``e^{t Lap} f``: multiply each mode by ``exp(-|k'|^2 t)``."""
    if t < 0:
        raise DomainError(f"heat semigroup needs t >= 0, got {t}")
    return f.replace(f.coeffs * np.exp(-f.grid.wavenumbers.k2 * t))


def _project(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    wn = grid.wavenumbers
    kd = wn.kd
    s = (kd[0] * c[0] + kd[1] * c[1] + kd[2] * c[2]) / wn.kd2_safe
    return np.stack([c[0] - kd[0] * s, c[1] - kd[1] * s, c[2] - kd[2] * s])


def leray_project(f: SpectralField) -> SpectralField:
    """Remove the gradient part: ``c - k'(k'.c)/|k'|^2``."""
    if f.comp_shape != (3,):
        raise DomainError("Leray projection acts on vector fields")
    return f.replace(_project(f.coeffs, f.grid), divergence_free=True)


def divergence(f: SpectralField) -> SpectralField:
    """Vector -> scalar, or tensor -> vector with ``(div F)_i = sum_j d_j F_ij``."""
    kd = f.grid.wavenumbers.kd
    c = f.coeffs
    if f.comp_shape == (3,):
        return SpectralField(f.grid, 1j * (kd[0] * c[0] + kd[1] * c[1] + kd[2] * c[2]))
    if f.comp_shape == (3, 3):
        out = np.stack([1j * (kd[0] * c[i, 0] + kd[1] * c[i, 1] + kd[2] * c[i, 2]) for i in range(3)])
        return SpectralField(f.grid, out)
    raise DomainError(f"divergence of a field with components {f.comp_shape}")


def gradient(f: SpectralField) -> SpectralField:
    """Scalar -> vector, vector -> tensor ``(grad u)_ij = d_j u_i``."""
    kd = f.grid.wavenumbers.kd
    c = f.coeffs
    if f.comp_shape == ():
        return SpectralField(f.grid, np.stack([1j * kd[j] * c for j in range(3)]))
    if f.comp_shape == (3,):
        return SpectralField(f.grid, np.stack([np.stack([1j * kd[j] * c[i] for j in range(3)])
                                               for i in range(3)]))
    raise DomainError(f"gradient of a field with components {f.comp_shape}")


def laplacian(f: SpectralField) -> SpectralField:
    return f.replace(-f.grid.wavenumbers.k2 * f.coeffs)


def _curl(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    kd = grid.wavenumbers.kd
    return 1j * np.stack([
        kd[1] * c[2] - kd[2] * c[1],
        kd[2] * c[0] - kd[0] * c[2],
        kd[0] * c[1] - kd[1] * c[0],
    ])


def curl(u: SpectralField) -> SpectralField:
    """Vorticity ``i k' x c``; exactly divergence-free."""
    if u.comp_shape != (3,):
        raise DomainError("curl acts on vector fields")
    return SpectralField(u.grid, _curl(u.coeffs, u.grid), divergence_free=True)


def dealias(f: SpectralField) -> SpectralField:
    return f.replace(f.coeffs * f.grid.wavenumbers.dealias)


# --- quadratic terms ----------------------------------------------------------

def _physical(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    return irfft3(c * grid.wavenumbers.dealias, grid.n_modes)


def _div_sym(t6: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Divergence of a symmetric tensor stored as its six unique entries."""
    kd = grid.wavenumbers.kd
    xx, yy, zz, xy, xz, yz = t6
    return 1j * np.stack([
        kd[0] * xx + kd[1] * xy + kd[2] * xz,
        kd[0] * xy + kd[1] * yy + kd[2] * yz,
        kd[0] * xz + kd[1] * yz + kd[2] * zz,
    ])


def _sym_products(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Unique entries of ``a (x) a`` or of ``a (x) b + b (x) a`` (halved)."""
    if b is None:
        return np.stack([a[i] * a[j] for i, j in _SYM_PAIRS])
    return np.stack([0.5 * (a[i] * b[j] + b[i] * a[j]) for i, j in _SYM_PAIRS])


def _div_product(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Spectral ``div(a (x) b)`` from physical vectors, dealiased."""
    kd = grid.wavenumbers.kd
    mask = grid.wavenumbers.dealias
    t = rfft3(np.stack([a[i] * b[j] for i in range(3) for j in range(3)])) * mask
    t = t.reshape((3, 3) + t.shape[1:])
    return 1j * np.stack([kd[0] * t[i, 0] + kd[1] * t[i, 1] + kd[2] * t[i, 2] for i in range(3)])


def _div_sym_product(p: np.ndarray, grid: GridSpec) -> np.ndarray:
    return _div_sym(rfft3(p) * grid.wavenumbers.dealias, grid)


def projected_nonlinearity(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Coefficients of ``-P div(u (x) u)`` for vector coefficients ``c``."""
    u = _physical(c, grid)
    return -_project(_div_sym_product(_sym_products(u), grid), grid)


def tensor_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased ``f (x) g`` as a (3, 3) tensor field."""
    f._check(g)
    grid = f.grid
    a, b = _physical(f.coeffs, grid), _physical(g.coeffs, grid)
    t = rfft3(np.stack([a[i] * b[j] for i in range(3) for j in range(3)])) * grid.wavenumbers.dealias
    return SpectralField(grid, t.reshape((3, 3) + t.shape[1:]))


def nonlinear_term(u: SpectralField) -> SpectralField:
    """``div(u (x) u)`` by dealiased physical-space products.

    A warning is logged when ``u`` is measurably compressible; the value is
    returned regardless.
    """
    ratio = divergence_ratio(u)
    if ratio > DIVERGENCE_WARN:
        logger.warning("nonlinear_term input is not divergence-free",
                       extra={"diagnostic": {"divergence_ratio": ratio}})
    phys = _physical(u.coeffs, u.grid)
    return SpectralField(u.grid, _div_sym_product(_sym_products(phys), u.grid))


def pressure_from_velocity(u: SpectralField) -> SpectralField:
    """Pressure ``p = R_i R_j (u_i u_j)``, i.e. ``-Lap p = d_i d_j (u_i u_j)``.

    With Riesz symbols ``i k_j/|k|`` this is ``p = -(k_i k_j / |k|^2) (u_i u_j)^``.
    """
    grid = u.grid
    wn = grid.wavenumbers
    kd = wn.kd
    t = rfft3(_sym_products(_physical(u.coeffs, grid))) * wn.dealias
    xx, yy, zz, xy, xz, yz = t
    contraction = (kd[0] ** 2 * xx + kd[1] ** 2 * yy + kd[2] ** 2 * zz
                   + 2.0 * (kd[0] * kd[1] * xy + kd[0] * kd[2] * xz + kd[1] * kd[2] * yz))
    p = -contraction / wn.kd2_safe
    p[wn.kd2 == 0.0] = 0.0
    return SpectralField(grid, p)


def oseen_apply(G: SpectralField, t: float) -> SpectralField:
    """``e^{t Lap} P div G`` for a (3, 3) tensor field, as one combined multiplier."""
    if t <= 0:
        raise DomainError(f"Oseen operator needs t > 0, got {t}")
    if G.comp_shape != (3, 3):
        raise DomainError("Oseen operator acts on (3, 3) tensor fields")
    grid = G.grid
    wn = grid.wavenumbers
    kd = wn.kd
    c = G.coeffs
    heat = np.exp(-wn.k2 * t)
    # Symbol M_il = e^{-|k|^2 t} (delta_il - k_i k_l/|k|^2) i k_j, applied to G_lj.
    v = [1j * (kd[0] * c[l, 0] + kd[1] * c[l, 1] + kd[2] * c[l, 2]) for l in range(3)]
    s = (kd[0] * v[0] + kd[1] * v[1] + kd[2] * v[2]) / wn.kd2_safe
    out = np.stack([heat * (v[i] - kd[i] * s) for i in range(3)])
    return SpectralField(grid, out, divergence_free=True)


# --- Duhamel integral ---------------------------------------------------------

def duhamel_weights(grid: GridSpec, h: float, tau: float, rule: QuadratureRule) -> np.ndarray:
    """Mode-wise weights for the three quadratic time-basis functions.

    On an interval of length ``h`` with local time ``theta = s/h``, linear
    interpolation of both factors gives a product with basis
    ``(1-theta)^2, theta(1-theta), theta^2``. Returned array ``W[m]`` equals
    ``int_0^{tau h} exp(-|k'|^2 (tau h - s)) b_m(s/h) ds``.
    """
    x, w = rule.unit_rule()
    theta = tau * x
    basis = np.stack([(1 - theta) ** 2, theta * (1 - theta), theta**2])
    k2 = grid.wavenumbers.k2
    out = np.zeros((3,) + k2.shape)
    for q in range(x.size):
        e = np.exp(-k2 * (h * tau * (1.0 - x[q])))
        for m in range(3):
            out[m] += (h * tau * w[q] * basis[m, q]) * e
    return out


class _WeightCache:
    def __init__(self, grid: GridSpec, rule: QuadratureRule):
        self.grid, self.rule = grid, rule
        self._store: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def get(self, h: float, tau: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        key = (float(h), float(tau))
        if key not in self._store:
            W = duhamel_weights(self.grid, h, tau, self.rule)
            E = np.exp(-self.grid.wavenumbers.k2 * (h * tau))
            self._store[key] = (W, E)
        return self._store[key]


def duhamel_lattice(
    f: np.ndarray,
    g: np.ndarray | None,
    times: np.ndarray,
    grid: GridSpec,
    rule: QuadratureRule,
    cache: _WeightCache | None = None,
) -> np.ndarray:
    """``B(f, g)`` at every lattice time for coefficient stacks ``(n_t, 3, ...)``.

    Pass ``g=None`` for the symmetric case ``B(f, f)``, which needs fewer
    transforms. Uses ``B(t_{n+1}) = e^{h Lap} B(t_n) + int over [t_n, t_{n+1}]``.
    """
    cache = cache or _WeightCache(grid, rule)
    nt = f.shape[0]
    out = np.zeros_like(f)
    fp = [_physical(f[i], grid) for i in range(nt)]
    gp = fp if g is None else [_physical(g[i], grid) for i in range(nt)]

    def term(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if g is None:
            return -_project(_div_sym_product(_sym_products(a) if b is a else _sym_products(a, b), grid), grid)
        return -_project(_div_product(a, b, grid), grid)

    prev = term(fp[0], gp[0])
    for i in range(nt - 1):
        W, E = cache.get(times[i + 1] - times[i])
        nxt = term(fp[i + 1], gp[i + 1])
        if g is None:
            cross = 2.0 * term(fp[i], fp[i + 1])
        else:
            cross = term(fp[i], gp[i + 1]) + term(fp[i + 1], gp[i])
        out[i + 1] = E * out[i] + W[0] * prev + W[1] * cross + W[2] * nxt
        prev = nxt
    return out


def _merged_lattice(trajs: Sequence[Trajectory], t: float) -> np.ndarray:
    pts = np.unique(np.concatenate([tr.times[tr.times < t] for tr in trajs] + [np.array([0.0, t])]))
    # Merge points closer than roundoff so no interval is degenerate.
    keep = np.concatenate([[True], np.diff(pts) > 1e-13 * max(1.0, t)])
    pts = pts[keep]
    pts[-1] = t
    return pts


def duhamel_bilinear(
    f_traj: Trajectory,
    g_traj: Trajectory,
    t: float,
    q: QuadratureRule | None = None,
) -> SpectralField:
    """``B(f, g)(t) = int_0^t e^{(t-s) Lap} P div(-f(s) (x) g(s)) ds``.

    Snapshots are interpolated linearly in time on the union of both lattices,
    so the product is exactly quadratic on each sub-interval and only the heat
    factor is handled by quadrature.

    Raises:
        CoverageError: if either trajectory stops before ``t``.
    """
    q = q or QuadratureRule()
    if f_traj.grid != g_traj.grid:
        raise DomainError("trajectories live on different grids")
    if t < 0:
        raise DomainError("t must be nonnegative")
    f_traj.require(t)
    g_traj.require(t)
    grid = f_traj.grid
    if t == 0:
        return SpectralField.zeros(grid)
    pts = _merged_lattice([f_traj, g_traj], t)
    fs = np.stack([f_traj.at(s).coeffs for s in pts])
    same = f_traj is g_traj
    gs = None if same else np.stack([g_traj.at(s).coeffs for s in pts])
    out = duhamel_lattice(fs, gs, pts, grid, q)
    return SpectralField(grid, out[-1], divergence_free=True)


# --- residuals ----------------------------------------------------------------

def _central_difference(traj: Trajectory, t: float) -> tuple[int, np.ndarray]:
    i = traj.index_of(t)
    if i == 0 or i == len(traj) - 1:
        raise DomainError("residual needs interior times with neighbours on both sides")
    t0, t1, t2 = traj.times[i - 1: i + 2]
    h1, h2 = t1 - t0, t2 - t1
    c = (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
    return i, np.array(c)


def momentum_residual_field(traj: Trajectory, t: float) -> SpectralField:
    """``u_t + div(u (x) u) - Lap u + grad p`` with a three-point time derivative."""
    i, c = _central_difference(traj, t)
    u = traj.snapshots[i]
    ut = sum(c[m] * traj.snapshots[i - 1 + m].coeffs for m in range(3))
    grid = traj.grid
    nl = nonlinear_term(u).coeffs
    p = pressure_from_velocity(u).coeffs
    kd = grid.wavenumbers.kd
    gp = np.stack([1j * kd[j] * p for j in range(3)])
    return SpectralField(grid, ut + nl + grid.wavenumbers.k2 * u.coeffs + gp)


def vorticity_residual_field(traj: Trajectory, t: float) -> SpectralField:
    """``w_t - Lap w + (u.grad) w - (w.grad) u`` with ``w = curl u``."""
    i, c = _central_difference(traj, t)
    grid = traj.grid
    kd = grid.wavenumbers.kd
    u = traj.snapshots[i].coeffs
    w = _curl(u, grid)
    wt = sum(c[m] * _curl(traj.snapshots[i - 1 + m].coeffs, grid) for m in range(3))
    up, wp = _physical(u, grid), _physical(w, grid)
    dw = [_physical(np.stack([1j * kd[j] * w[k] for k in range(3)]), grid) for j in range(3)]
    du = [_physical(np.stack([1j * kd[j] * u[k] for k in range(3)]), grid) for j in range(3)]
    stretch = np.stack([
        sum(up[j] * dw[j][k] - wp[j] * du[j][k] for j in range(3)) for k in range(3)
    ])
    adv = rfft3(stretch) * grid.wavenumbers.dealias
    return SpectralField(grid, wt + grid.wavenumbers.k2 * w + adv)


def _l2(f: SpectralField) -> float:
    return sobolev_norm(f, 0.0)


def nse_residual(traj: Trajectory, t: float) -> float:
    """Relative momentum residual ``||R||_2 / (||u(t)||_{H^1} + eps)``."""
    r = momentum_residual_field(traj, t)
    u = traj.snapshots[traj.index_of(t)]
    return _l2(r) / (sobolev_norm(u, 1.0) + RESIDUAL_EPS)


def vorticity_residual(traj: Trajectory, t: float) -> float:
    """Relative vorticity residual ``||R_w||_2 / (||w(t)||_{H^1} + eps)``."""
    r = vorticity_residual_field(traj, t)
    u = traj.snapshots[traj.index_of(t)]
    return _l2(r) / (sobolev_norm(curl(u), 1.0) + RESIDUAL_EPS)
