"""Scaling and translation symmetries, profile superposition and compactness diagnostics.

Data are continuum objects (:class:`AnalyticDatum`) that can be evaluated at
any point, so a rescaled or translated profile is sampled directly instead of
being interpolated from another grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DomainError, ProfileError
from .operators import leray_project
from .spectral_field import (
    GridSpec,
    PhysicalField,
    SpectralField,
    ball_mask,
    divergence_ratio,
    periodic_offset,
    sobolev_inner,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

DATUM_KINDS = ("taylor_green", "band_limited_random", "localized_vortex")
# Gaussian tails beyond this many widths are below 1e-17 and are dropped.
_TAIL_WIDTHS = 9.0
# A localized vortex is considered to occupy a ball of this many widths.
_SUPPORT_WIDTHS = 3.0


@dataclass(frozen=True)
class AnalyticDatum:
    """Divergence-free, mean-free initial datum defined on all of space.

    Kinds:
        ``taylor_green``: ``A (sin kx cos ky, -cos kx sin ky, 0)`` with
        ``k = 2 pi / period``.
        ``band_limited_random``: random solenoidal trigonometric polynomial
        with integer wavenumbers in ``band`` (units of ``2 pi / period``),
        energy spectrum ``~ |k|^slope``, scaled so that its ``H^1/2`` norm on
        one period cell equals ``amplitude``. Fully determined by ``seed``.
        ``localized_vortex``: ``curl(psi e_3)`` with Gaussian stream function
        ``psi = A w exp(-|x|^2 / (2 w^2))`` and ``w = width``.
    """

    kind: str
    amplitude: float = 1.0
    seed: int = 0
    slope: float = -5.0 / 3.0
    band: tuple[float, float] = (1.0, 3.0)
    width: float = 0.5
    period: float = 2.0 * math.pi

    def __post_init__(self) -> None:
        if self.kind not in DATUM_KINDS:
            raise ValueError(f"unknown datum kind {self.kind!r}")
        object.__setattr__(self, "band", (float(self.band[0]), float(self.band[1])))
        if not 0 < self.band[0] <= self.band[1]:
            raise ValueError("band must satisfy 0 < k_min <= k_max")
        if not self.width > 0 or not self.period > 0:
            raise ValueError("width and period must be positive")
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")

    @classmethod
    def taylor_green(cls, amplitude: float = 1.0, period: float = 2.0 * math.pi) -> "AnalyticDatum":
        return cls("taylor_green", amplitude=amplitude, period=period)

    @classmethod
    def band_limited_random(cls, seed: int, slope: float = -5.0 / 3.0, band: tuple[float, float] = (1.0, 3.0),
                            amplitude: float = 1.0, period: float = 2.0 * math.pi) -> "AnalyticDatum":
        return cls("band_limited_random", amplitude=amplitude, seed=int(seed), slope=slope,
                   band=band, period=period)

    @classmethod
    def localized_vortex(cls, width: float, amplitude: float = 1.0) -> "AnalyticDatum":
        return cls("localized_vortex", amplitude=amplitude, width=width)

    @property
    def is_periodic(self) -> bool:
        return self.kind != "localized_vortex"

    @property
    def support_scale(self) -> float:
        """Period for periodic kinds, effective radius for the localized vortex."""
        return self.period if self.is_periodic else _SUPPORT_WIDTHS * self.width

    def evaluate(self, x: np.ndarray, y: np.ndarray, z: np.ndarray, box: float | None = None) -> np.ndarray:
        """Velocity at broadcastable coordinate arrays; shape ``(3,) + broadcast shape``.

        For the localized vortex, ``box`` sums the periodic images on a cube of
        that side; periodic kinds ignore it.
        """
        x, y, z = (np.asarray(a, float) for a in (x, y, z))
        shape = np.broadcast_shapes(x.shape, y.shape, z.shape)
        if self.amplitude == 0.0:
            return np.zeros((3,) + shape)
        if self.kind == "taylor_green":
            k = 2.0 * math.pi / self.period
            a = self.amplitude
            ux = a * np.sin(k * x) * np.cos(k * y)
            uy = -a * np.cos(k * x) * np.sin(k * y)
            return np.stack(np.broadcast_arrays(ux, uy, 0.0 * z))
        if self.kind == "band_limited_random":
            return self._evaluate_random(x, y, z, shape)
        return self._evaluate_vortex(x, y, z, box)

    def _evaluate_random(self, x, y, z, shape) -> np.ndarray:
        n, a = _random_modes(self.seed, self.slope, self.band, self.period)
        k0 = 2.0 * math.pi / self.period
        out = np.zeros((3,) + shape)
        ex = {}
        for m in range(n.shape[0]):
            e = np.exp(1j * k0 * n[m, 0] * x) * np.exp(1j * k0 * n[m, 1] * y) * np.exp(1j * k0 * n[m, 2] * z)
            for i in range(3):
                out[i] += 2.0 * (a[m, i] * e).real
        return self.amplitude * out

    def _evaluate_vortex(self, x, y, z, box) -> np.ndarray:
        w = self.width
        gx, dgx = _gaussian_1d(x, w, box)
        gy, dgy = _gaussian_1d(y, w, box)
        gz, _ = _gaussian_1d(z, w, box)
        # psi = A w G(x) G(y) G(z); u = (d_y psi, -d_x psi, 0)
        c = self.amplitude * w
        ux = c * gx * dgy * gz
        uy = -c * dgx * gy * gz
        return np.stack(np.broadcast_arrays(ux, uy, 0.0 * (x + y + z)))


def _gaussian_1d(x: np.ndarray, w: float, box: float | None) -> tuple[np.ndarray, np.ndarray]:
    """``exp(-x^2/(2w^2))`` and its derivative, summed over images if ``box`` is set."""
    if box is None:
        images = [0.0]
    else:
        m = int(math.ceil(_TAIL_WIDTHS * w / box))
        images = [j * box for j in range(-m, m + 1)]
    g = np.zeros_like(x)
    dg = np.zeros_like(x)
    for s in images:
        xs = x - s
        e = np.exp(-0.5 * (xs / w) ** 2)
        g = g + e
        dg = dg - xs / (w * w) * e
    return g, dg


@lru_cache(maxsize=64)
def _random_modes(seed: int, slope: float, band: tuple[float, float], period: float) -> tuple[np.ndarray, np.ndarray]:
    """Half-space wavevectors and complex solenoidal amplitudes, normalized to unit ``H^1/2``."""
    kmin, kmax = band
    r = int(math.floor(kmax))
    rng = np.random.Generator(np.random.PCG64(seed))
    vecs, amps = [], []
    for n1 in range(-r, r + 1):
        for n2 in range(-r, r + 1):
            for n3 in range(0, r + 1):
                if n3 == 0 and (n2 < 0 or (n2 == 0 and n1 <= 0)):
                    continue
                kk = math.sqrt(n1 * n1 + n2 * n2 + n3 * n3)
                if not kmin <= kk <= kmax:
                    continue
                v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
                nv = np.array([n1, n2, n3], float)
                v = v - nv * (nv @ v) / (nv @ nv)
                vecs.append(nv)
                amps.append(v * kk ** ((slope - 2.0) / 2.0))
    if not vecs:
        raise ValueError("band contains no integer wavevectors")
    n = np.array(vecs)
    a = np.array(amps)
    k0 = 2.0 * math.pi / period
    hh2 = period**3 * 2.0 * float(np.sum(k0 * np.linalg.norm(n, axis=1) * np.sum(np.abs(a) ** 2, axis=1)))
    a = a / math.sqrt(hh2)
    n.flags.writeable = False
    a.flags.writeable = False
    return n, a


@dataclass(frozen=True)
class ProfileSpec:
    """Placed bubble ``x -> (1/lam) V((x - x0)/lam)``; there is no time shift."""

    datum: AnalyticDatum
    lam: float = 1.0
    x0: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ProfileError(f"profile scale must be positive, got {self.lam}")
        x0 = tuple(float(v) for v in self.x0)
        if len(x0) != 3:
            raise ProfileError("profile core must be a 3-vector")
        object.__setattr__(self, "x0", x0)


def _check_fit(p: ProfileSpec, g: GridSpec) -> None:
    L = g.box_length
    if any(not 0.0 <= c < L for c in p.x0):
        raise ProfileError(f"core {p.x0} outside the box [0, {L})")
    d = p.datum
    if d.is_periodic:
        ratio = L / (p.lam * d.period)
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ProfileError("periodic datum does not tile the box at this scale")
    elif p.lam * d.support_scale > L / 2:
        raise ProfileError(f"profile radius {p.lam * d.support_scale:.4g} exceeds half the box")


def place_profile(p: ProfileSpec, g: GridSpec) -> SpectralField:
    """Sample ``(1/lam) V((x - x0)/lam)`` on the grid, then Leray-project.

    Sampling a non-band-limited datum aliases a tiny compressible part into
    the coefficients; the projection removes it and its size is logged.

    Raises:
        ProfileError: if the profile is wider than half the box, a periodic
            datum does not tile the box, or the core lies outside the box.
    """
    _check_fit(p, g)
    L = g.box_length
    x = g.coordinates()
    axes = [periodic_offset(x, c, L) / p.lam for c in p.x0]
    vals = p.datum.evaluate(axes[0][:, None, None], axes[1][None, :, None], axes[2][None, None, :],
                            box=L / p.lam) / p.lam
    raw, _ = to_spectral(PhysicalField(g, vals))
    ratio = divergence_ratio(raw)
    if ratio > 1e-10:
        logger.info("sampled datum carried an aliased compressible part",
                    extra={"diagnostic": {"divergence_ratio": ratio, "kind": p.datum.kind}})
    return leray_project(raw)


def sample_datum(d: AnalyticDatum, g: GridSpec) -> SpectralField:
    """The datum itself on the grid (unit scale, core at the origin)."""
    return place_profile(ProfileSpec(d), g)


def scale_solution(traj: Trajectory, lam: float) -> Trajectory:
    """``u_lam(x, t) = lam u(lam x, lam^2 t)`` on the box of side ``L / lam``.

    On the grid this multiplies the coefficients by ``lam`` and the times by
    ``1/lam^2``; mode indices are unchanged.
    """
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
        raise DomainError(f"scale factor {lam!r} is not representable")
    grid = traj.grid.rescaled(1.0 / lam)
    snaps = [SpectralField(grid, s.coeffs * lam, s.divergence_free) for s in traj.snapshots]
    info = dict(traj.info)
    if "t_star_estimate" in info:
        info["t_star_estimate"] = info["t_star_estimate"] / lam**2
    return Trajectory.from_snapshots(grid, traj.times / lam**2, snaps, traj.terminated_reason, info)


def superpose_profiles(profiles: Sequence[ProfileSpec], remainder: SpectralField | None, g: GridSpec) -> SpectralField:
    """Sum of placed profiles plus an optional remainder."""
    total = SpectralField.zeros(g) if remainder is None else remainder
    for p in profiles:
        total = total + place_profile(p, g)
    return total


def pythagorean_defect(profiles: Sequence[ProfileSpec], remainder: SpectralField | None, g: GridSpec) -> float:
    """``| ||sum||^2 - sum ||V_j||^2 - ||w||^2 | / ||sum||^2`` in ``H^1/2``."""
    placed = [place_profile(p, g) for p in profiles]
    total = SpectralField.zeros(g) if remainder is None else remainder
    for f in placed:
        total = total + f
    whole = sobolev_norm(total, 0.5) ** 2
    if whole == 0.0:
        raise DomainError("defect undefined for a zero superposition")
    parts = sum(sobolev_norm(f, 0.5) ** 2 for f in placed)
    if remainder is not None:
        parts += sobolev_norm(remainder, 0.5) ** 2
    return abs(whole - parts) / whole


def inner_product_orthogonality(p1: ProfileSpec, p2: ProfileSpec, g: GridSpec) -> float:
    """Normalized ``H^1/2`` inner product of two placed profiles."""
    f1, f2 = place_profile(p1, g), place_profile(p2, g)
    n1, n2 = sobolev_norm(f1, 0.5), sobolev_norm(f2, 0.5)
    if n1 == 0.0 or n2 == 0.0:
        raise DomainError("inner product undefined for a zero profile")
    return sobolev_inner(f1, f2, 0.5) / (n1 * n2)


@dataclass(frozen=True)
class SimilarityFrame:
    """Scale ``lambda_t`` (an inverse length) and centre ``x_t`` per snapshot.

    ``defined[i]`` is False for zero snapshots (their ``lambda_t`` is nan).
    ``degenerate[i, j]`` marks axes whose circular mean has no preferred
    direction; the centre coordinate is then set to 0.
    """

    times: np.ndarray
    lambda_t: np.ndarray
    x_t: np.ndarray
    defined: np.ndarray
    degenerate: np.ndarray


def similarity_frame_track(traj: Trajectory, resultant_tol: float = 1e-8) -> SimilarityFrame:
    """``lambda(t) = ||u||_{H^3/2} / ||u||_{H^1/2}``; ``x(t)`` = circular mean of ``|u|^3``."""
    L = traj.grid.box_length
    theta = 2.0 * math.pi * traj.grid.coordinates() / L
    phase = np.exp(1j * theta)
    n = len(traj)
    lam = np.full(n, np.nan)
    centre = np.zeros((n, 3))
    defined = np.zeros(n, bool)
    degenerate = np.zeros((n, 3), bool)
    for i, (u, rec) in enumerate(zip(traj.snapshots, traj.records)):
        if rec.hdot_half == 0.0:
            degenerate[i] = True
            continue
        defined[i] = True
        lam[i] = rec.hdot_threehalf / rec.hdot_half
        v = to_physical(u).values
        rho = np.sum(v * v, axis=0) ** 1.5
        mass = float(np.sum(rho))
        marg = [rho.sum(axis=(1, 2)), rho.sum(axis=(0, 2)), rho.sum(axis=(0, 1))]
        for j in range(3):
            z = complex(np.sum(marg[j] * phase))
            if abs(z) < resultant_tol * mass:
                degenerate[i, j] = True
            else:
                centre[i, j] = (math.atan2(z.imag, z.real) % (2.0 * math.pi)) * L / (2.0 * math.pi)
    return SimilarityFrame(traj.times.copy(), lam, centre, defined, degenerate)


def _resample(u: SpectralField, points: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate the trigonometric interpolant on the tensor grid ``points[0] x points[1] x points[2]``."""
    wn = u.grid.wavenumbers
    kx, ky, kz = (a.ravel() for a in wn.k)
    ax = np.exp(1j * np.outer(kx, points[0]))
    ay = np.exp(1j * np.outer(ky, points[1]))
    az = np.exp(1j * np.outer(kz, points[2])) * wn.weight.ravel()[:, None]
    out = []
    for c in u.coeffs:
        t = np.einsum("xyz,xa->ayz", c, ax, optimize=True)
        t = np.einsum("ayz,yb->abz", t, ay, optimize=True)
        out.append(np.einsum("abz,zc->abc", t, az, optimize=True).real)
    return np.stack(out)


def renormalized_snapshot(u: SpectralField, lam: float, centre: Sequence[float], reference: GridSpec) -> np.ndarray:
    """Values of ``v(xi) = (1/lam) u(centre + xi/lam)`` at the reference grid points.

    Reference coordinates ``xi`` are minimum-image offsets from the origin,
    so the centre of mass of ``u`` lands at ``xi = 0``.

    Raises:
        ProfileError: if ``u`` carries frequencies above the reference Nyquist
            limit after rescaling.
    """
    wn = u.grid.wavenumbers
    amp = np.sqrt(np.sum(np.abs(u.coeffs) ** 2, axis=0))
    top = float(np.max(amp))
    if top > 0:
        live = amp > 1e-12 * top
        kmax = float(np.max(np.maximum.reduce([np.abs(np.broadcast_to(k, amp.shape))[live] for k in wn.k])))
        nyq = math.pi * reference.n_modes / reference.box_length
        if kmax / lam > nyq * (1.0 + 1e-12):
            raise ProfileError(f"rescaled content {kmax / lam:.4g} exceeds reference Nyquist {nyq:.4g}")
    xi = periodic_offset(reference.coordinates(), 0.0, reference.box_length)
    pts = [centre[j] + xi / lam for j in range(3)]
    return _resample(u, pts) / lam


def compactness_diagnostic(
    traj: Trajectory,
    frame: SimilarityFrame,
    sample_times: Sequence[float],
    reference: GridSpec | None = None,
    normalize_amplitude: bool = False,
) -> np.ndarray:
    """Pairwise ``L^3`` distances of renormalized snapshots on a common grid.

    The default reference grid keeps the mode count and uses the box
    ``L * min(lambda)`` over the samples: the renormalized snapshot with the
    smallest scale fills it exactly and every other one is resolved on it. With ``normalize_amplitude`` each snapshot is divided by
    its own ``L^3`` norm first.
    """
    idx = [traj.index_of(t) for t in sample_times]
    for i in idx:
        if not frame.defined[i]:
            raise DomainError(f"similarity frame undefined at t = {traj.times[i]}")
    if reference is None:
        reference = traj.grid.rescaled(float(min(frame.lambda_t[i] for i in idx)))
    dv = reference.cell_volume
    fields = []
    for i in idx:
        v = renormalized_snapshot(traj.snapshots[i], float(frame.lambda_t[i]), frame.x_t[i], reference)
        if normalize_amplitude:
            nrm = float(np.sum(np.sum(v * v, axis=0) ** 1.5) * dv) ** (1 / 3)
            if nrm > 0:
                v = v / nrm
        fields.append(v)
    m = len(fields)
    out = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            d = fields[a] - fields[b]
            out[a, b] = out[b, a] = float(np.sum(np.sum(d * d, axis=0) ** 1.5) * dv) ** (1 / 3)
    return out


def local_l2_mass(f: SpectralField, center: Sequence[float], R: float) -> float:
    """``int_{B_R(center)} |f|^2`` by masked grid quadrature (periodic distance)."""
    if R <= 0 or R > f.grid.box_length / 2:
        raise DomainError(f"radius {R} must lie in (0, L/2]")
    v = to_physical(f).values
    dens = np.sum(v * v, axis=0) if v.ndim == 4 else v * v
    return float(np.sum(dens[ball_mask(f.grid, center, R)]) * f.grid.cell_volume)
