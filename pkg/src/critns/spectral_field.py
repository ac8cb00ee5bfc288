"""Periodic-box fields, transforms and norms.

Coefficients use the convention ``u(x) = sum_k c_k exp(i k'.x)`` with
``c = fftn(u) / n**3`` and ``k' = 2*pi*k / L``. Only the half spectrum of the
real-to-complex transform is stored (last axis ``0 .. n/2``); every mode sum
therefore carries a multiplicity weight of 2 on the interior of that axis.

Derivative symbols use a wavevector whose Nyquist entries are zeroed, while
norms and the heat multiplier use the true ``|k'|``. Fields free of Nyquist
content (anything produced by a dealiased product) see no difference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, MalformedFieldError

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
SOBOLEV_RANGE = (-2.0, 3.0)


@dataclass(frozen=True)
class GridSpec:
    """Cubic periodic grid on ``[0, box_length)^3``.

    Args:
        n_modes: Points (and Fourier modes) per axis; even and at least 8.
        box_length: Side length of the periodic box.
        dealias_fraction: Products keep modes with ``|k_i| < fraction * n/2``.
    """

    n_modes: int
    box_length: float = 2.0 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        n = self.n_modes
        if isinstance(n, bool) or int(n) != n:
            raise ValueError(f"n_modes must be an integer, got {n!r}")
        object.__setattr__(self, "n_modes", int(n))
        if self.n_modes < 8 or self.n_modes % 2:
            raise ValueError(f"n_modes must be even and >= 8, got {self.n_modes}")
        L = float(self.box_length)
        if not np.isfinite(L) or L <= 0:
            raise ValueError(f"box_length must be positive, got {self.box_length!r}")
        object.__setattr__(self, "box_length", L)
        frac = float(self.dealias_fraction)
        if not 0.0 < frac <= 1.0:
            raise ValueError(f"dealias_fraction must lie in (0, 1], got {frac}")
        object.__setattr__(self, "dealias_fraction", frac)

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_modes

    @property
    def volume(self) -> float:
        return self.box_length**3

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n_modes,) * 3

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        n = self.n_modes
        return (n, n, n // 2 + 1)

    @property
    def wavenumbers(self) -> "Wavenumbers":
        return _wavenumbers(self.n_modes, self.box_length, self.dealias_fraction)

    def coordinates(self) -> np.ndarray:
        """1D array of grid coordinates ``j * L / n``."""
        return np.arange(self.n_modes) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays of shapes (n,1,1), (1,n,1), (1,1,n)."""
        x = self.coordinates()
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def rescaled(self, factor: float) -> "GridSpec":
        """Same mode count on a box whose side is multiplied by ``factor``."""
        return GridSpec(self.n_modes, self.box_length * factor, self.dealias_fraction)


@dataclass(frozen=True)
class Wavenumbers:
    """Precomputed, read-only wavevector tables for one grid."""

    k: tuple[np.ndarray, np.ndarray, np.ndarray]
    kd: tuple[np.ndarray, np.ndarray, np.ndarray]
    k_int: tuple[np.ndarray, np.ndarray, np.ndarray]
    k2: np.ndarray
    kmag: np.ndarray
    kd2: np.ndarray
    kd2_safe: np.ndarray
    weight: np.ndarray
    dealias: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@lru_cache(maxsize=32)
def _wavenumbers(n: int, L: float, frac: float) -> Wavenumbers:
    scale = 2.0 * np.pi / L
    ki = np.fft.fftfreq(n, 1.0 / n)
    kz = np.arange(n // 2 + 1, dtype=float)
    kx_i, ky_i, kz_i = ki[:, None, None], ki[None, :, None], kz[None, None, :]
    k = tuple(_frozen(a * scale) for a in (kx_i, ky_i, kz_i))

    def no_nyquist(a: np.ndarray) -> np.ndarray:
        return np.where(np.abs(a) == n // 2, 0.0, a)

    kd = tuple(_frozen(no_nyquist(a) * scale) for a in (kx_i, ky_i, kz_i))
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    kd2 = kd[0] ** 2 + kd[1] ** 2 + kd[2] ** 2
    kd2_safe = np.where(kd2 == 0.0, 1.0, kd2)
    weight = np.full(kz.shape, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    cut = frac * n / 2.0
    # Strict inequality: with the 2/3 rule this is the aliasing-free set.
    mask = (np.abs(kx_i) < cut) & (np.abs(ky_i) < cut) & (kz_i < cut)
    return Wavenumbers(
        k=k,
        kd=kd,
        k_int=tuple(_frozen(a.astype(int)) for a in (kx_i, ky_i, kz_i)),
        k2=_frozen(k2),
        kmag=_frozen(np.sqrt(k2)),
        kd2=_frozen(kd2),
        kd2_safe=_frozen(kd2_safe),
        weight=_frozen(weight[None, None, :]),
        dealias=_frozen(mask),
    )


def _readonly(a: np.ndarray) -> np.ndarray:
    v = a.view()
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real field stored as half-spectrum Fourier coefficients.

    ``coeffs`` has shape ``comp_shape + grid.spectral_shape``: ``(3, ...)`` for
    vectors, ``(3, 3, ...)`` for tensors, ``(...)`` for scalars.
    """

    grid: GridSpec
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape[-3:] != self.grid.spectral_shape:
            raise MalformedFieldError(
                f"coefficient shape {c.shape} does not end with {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coeffs", _readonly(c))

    @classmethod
    def zeros(cls, grid: GridSpec, comp_shape: tuple[int, ...] = (3,)) -> "SpectralField":
        return cls(grid, np.zeros(comp_shape + grid.spectral_shape, complex), divergence_free=True)

    @property
    def comp_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-3]

    def replace(self, coeffs: np.ndarray, divergence_free: bool | None = None) -> "SpectralField":
        flag = self.divergence_free if divergence_free is None else divergence_free
        return SpectralField(self.grid, coeffs, flag)

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i])

    def _check(self, other: "SpectralField") -> None:
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * a, self.divergence_free)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs, self.divergence_free)

    def __truediv__(self, a: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs / a, self.divergence_free)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Grid-point values with shape ``comp_shape + (n, n, n)``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape[-3:] != self.grid.physical_shape:
            raise MalformedFieldError(
                f"value shape {v.shape} does not end with {self.grid.physical_shape}"
            )
        if not np.all(np.isfinite(v)):
            raise MalformedFieldError("physical field has non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def comp_shape(self) -> tuple[int, ...]:
        return self.values.shape[:-3]


# --- transforms -----------------------------------------------------------

def _mirror(plane: np.ndarray) -> np.ndarray:
    """``plane[..., (-i) % n, (-j) % n]``."""
    p = np.flip(plane, axis=(-2, -1))
    return np.roll(p, 1, axis=(-2, -1))


def hermitian_defect(f: SpectralField) -> float:
    """Relative violation of ``c(-k) = conj(c(k))`` on the self-conjugate planes."""
    c = f.coeffs
    scale = float(np.max(np.abs(c))) if c.size else 0.0
    if scale == 0.0:
        return 0.0
    worst = 0.0
    planes = [0, c.shape[-1] - 1] if f.grid.n_modes % 2 == 0 else [0]
    for iz in planes:
        p = c[..., iz]
        worst = max(worst, float(np.max(np.abs(p - np.conj(_mirror(p))))))
    return worst / scale


def irfft3(c: np.ndarray, n: int) -> np.ndarray:
    """Raw inverse transform of half-spectrum coefficients (no checks)."""
    return sfft.irfftn(c, s=(n, n, n), axes=(-3, -2, -1), norm="forward")


def _symmetrize(c: np.ndarray) -> np.ndarray:
    """Make the self-conjugate planes exactly Hermitian (in place)."""
    for iz in (0, c.shape[-1] - 1):
        p = c[..., iz]
        c[..., iz] = 0.5 * (p + np.conj(_mirror(p)))
    return c


def rfft3(v: np.ndarray) -> np.ndarray:
    """Forward transform to half-spectrum coefficients.

    The planes ``k_3 = 0`` and ``k_3 = n/2`` are symmetrized so that the
    coefficients are exactly Hermitian; every later multiplier preserves that
    bit for bit.
    """
    return _symmetrize(sfft.rfftn(v, axes=(-3, -2, -1), norm="forward"))


def to_physical(f: SpectralField) -> PhysicalField:
    """Evaluate the field at the grid points.

    Raises:
        MalformedFieldError: if the coefficients are not Hermitian to 1e-12
            relative (the inverse transform would carry an imaginary residue)
            or contain non-finite values.
    """
    if not np.all(np.isfinite(f.coeffs)):
        raise MalformedFieldError("spectral field has non-finite coefficients")
    defect = hermitian_defect(f)
    if defect > HERMITIAN_TOL:
        raise MalformedFieldError(f"Hermitian symmetry violated: relative defect {defect:.3e}")
    return PhysicalField(f.grid, irfft3(f.coeffs, f.grid.n_modes))


def to_spectral(f: PhysicalField) -> tuple[SpectralField, np.ndarray]:
    """Forward transform; returns the mean-free field and the removed mean."""
    c = rfft3(f.values)
    mean = np.array(c[..., 0, 0, 0].real, copy=True)
    c[..., 0, 0, 0] = 0.0
    return SpectralField(f.grid, c), mean


def _as_physical(f: SpectralField | PhysicalField) -> PhysicalField:
    return f if isinstance(f, PhysicalField) else to_physical(f)


# --- mode sums -------------------------------------------------------------

def _check_s(s: float) -> None:
    lo, hi = SOBOLEV_RANGE
    if not lo <= s <= hi:
        raise DomainError(f"Sobolev index {s} outside supported range [{lo}, {hi}]")


def _symbol_power(grid: GridSpec, s: float) -> np.ndarray:
    kmag = grid.wavenumbers.kmag
    out = np.zeros_like(kmag)
    nz = kmag > 0
    out[nz] = kmag[nz] ** s
    return out


def sobolev_inner(f: SpectralField, g: SpectralField, s: float) -> float:
    """Homogeneous ``H^s`` inner product, summed over components."""
    _check_s(s)
    f._check(g)
    w = f.grid.wavenumbers.weight * _symbol_power(f.grid, 2.0 * s)
    prod = (f.coeffs * np.conj(g.coeffs)).real
    return float(np.sum(prod * w) * f.grid.volume)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """``(L^3 sum_k |k'|^{2s} |c_k|^2)^{1/2}`` with the zero mode excluded."""
    _check_s(s)
    w = f.grid.wavenumbers.weight * _symbol_power(f.grid, 2.0 * s)
    a = np.abs(f.coeffs) ** 2
    return float(np.sqrt(np.sum(a * w) * f.grid.volume))


def sobolev_norms(f: SpectralField, orders: Sequence[float]) -> list[float]:
    """Several Sobolev norms sharing one pass over ``|c_k|^2``."""
    for s in orders:
        _check_s(s)
    a = np.sum(np.abs(f.coeffs) ** 2, axis=tuple(range(f.coeffs.ndim - 3))) * f.grid.wavenumbers.weight
    return [float(np.sqrt(np.sum(a * _symbol_power(f.grid, 2.0 * s)) * f.grid.volume)) for s in orders]


def pointwise_magnitude(f: SpectralField | PhysicalField) -> np.ndarray:
    v = _as_physical(f).values
    if v.ndim == 3:
        return np.abs(v)
    axes = tuple(range(v.ndim - 3))
    return np.sqrt(np.sum(v * v, axis=axes))


def lebesgue_norm(f: SpectralField | PhysicalField, p: float) -> float:
    """Equal-weight grid quadrature of ``|u(x)|^p``; ``p = inf`` is the grid max.

    ``|u(x)|`` is the Euclidean magnitude of the vector at each point.
    """
    p = float(p)
    if not p >= 1.0:
        raise DomainError(f"Lebesgue exponent must be >= 1, got {p}")
    mag = pointwise_magnitude(f)
    if np.isinf(p):
        return float(np.max(mag))
    top = float(np.max(mag))
    if top == 0.0:
        return 0.0
    # Normalizing by the maximum keeps large p away from overflow.
    return top * float((np.sum((mag / top) ** p) * f.grid.cell_volume) ** (1.0 / p))


def fractional_laplacian(f: SpectralField, s: float) -> SpectralField:
    """Multiply every mode by ``|k'|^s``; the zero mode stays zero."""
    _check_s(s)
    return f.replace(f.coeffs * _symbol_power(f.grid, s))


def divergence_defect(f: SpectralField) -> float:
    """Largest per-mode ratio ``|k'.c| / (|k'||c|)`` above the roundoff floor."""
    wn = f.grid.wavenumbers
    c = f.coeffs
    div = np.abs(wn.kd[0] * c[0] + wn.kd[1] * c[1] + wn.kd[2] * c[2])
    amp = np.sqrt(wn.kd2) * np.sqrt(np.sum(np.abs(c) ** 2, axis=0))
    top = float(np.max(amp)) if amp.size else 0.0
    if top == 0.0:
        return 0.0
    live = amp > 1e-13 * top
    return float(np.max(div[live] / amp[live]))


def divergence_ratio(f: SpectralField) -> float:
    """Global relative divergence ``||k'.c|| / || |k'| c ||`` in mode-sum norm."""
    wn = f.grid.wavenumbers
    c = f.coeffs
    div = wn.kd[0] * c[0] + wn.kd[1] * c[1] + wn.kd[2] * c[2]
    num = np.sum(wn.weight * np.abs(div) ** 2)
    den = np.sum(wn.weight * wn.kd2 * np.sum(np.abs(c) ** 2, axis=0))
    return float(np.sqrt(num / den)) if den > 0 else 0.0


def periodic_offset(x: np.ndarray, c: float, L: float) -> np.ndarray:
    """Minimum-image displacement ``x - c`` on a circle of length ``L``."""
    return (x - c + 0.5 * L) % L - 0.5 * L


def ball_mask(grid: GridSpec, center: Sequence[float], radius: float) -> np.ndarray:
    """Grid points within periodic distance ``radius`` of ``center``."""
    x = grid.coordinates()
    L = grid.box_length
    d = [periodic_offset(x, float(c), L) ** 2 for c in center]
    r2 = d[0][:, None, None] + d[1][None, :, None] + d[2][None, None, :]
    return r2 <= radius * radius


def bmo_minus1_norm(
    f: SpectralField,
    T: float,
    probe_centers: Iterable[Sequence[float]],
    probe_times: Iterable[float],
    nodes: int = 16,
) -> float:
    """Maximum over probes of ``t^{-3/2} int_0^t int_{B(x0, sqrt t)} |e^{s Lap} f|^2``.

    The time integral uses the composite midpoint rule with ``nodes`` points and
    the ball integral uses the grid points inside the periodic ball. Probes with
    ``sqrt(t) > L/2`` would wrap the torus and are skipped with a warning.
    """
    if T <= 0:
        raise DomainError("T must be positive")
    if nodes < 16:
        raise DomainError("at least 16 midpoint nodes are required")
    centers = [tuple(float(v) for v in c) for c in probe_centers]
    times = [float(t) for t in probe_times]
    if not centers or not times:
        raise DomainError("probe set is empty")
    grid = f.grid
    k2 = grid.wavenumbers.k2
    best = 0.0
    accepted = 0
    for t in times:
        if not 0.0 < t <= T:
            raise DomainError(f"probe time {t} outside (0, {T}]")
        radius = np.sqrt(t)
        if radius > grid.box_length / 2:
            logger.warning("bmo probe rejected: ball wraps the torus",
                           extra={"diagnostic": {"t": t, "radius": radius, "L": grid.box_length}})
            continue
        accepted += 1
        ds = t / nodes
        density = np.zeros(grid.physical_shape)
        for i in range(nodes):
            s = (i + 0.5) * ds
            v = irfft3(f.coeffs * np.exp(-k2 * s), grid.n_modes)
            density += np.sum(v * v, axis=0)
        density *= ds * grid.cell_volume
        for c in centers:
            val = float(np.sum(density[ball_mask(grid, c, radius)])) * t**-1.5
            best = max(best, val)
    if accepted == 0:
        raise DomainError("every bmo probe was rejected")
    return best


def random_band_limited(
    grid: GridSpec,
    rng: np.random.Generator,
    k_max: float,
    k_min: float = 1.0,
    slope: float = 0.0,
    solenoidal: bool = True,
) -> SpectralField:
    """Random real vector field with integer wavenumbers ``k_min <= |k| <= k_max``.

    Amplitudes are complex Gaussians scaled by ``|k|^slope``; the result is
    Hermitian, mean-free and, if requested, Leray-projected.
    """
    wn = grid.wavenumbers
    n = grid.n_modes
    kint = np.sqrt(sum(a.astype(float) ** 2 for a in wn.k_int))
    shell = (kint >= k_min) & (kint <= k_max)
    if k_max >= grid.dealias_fraction * n / 2:
        raise DomainError("band exceeds the dealiased range of the grid")
    shape = (3,) + grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    amp = np.where(shell, np.where(kint > 0, kint, 1.0) ** slope, 0.0)
    c *= amp
    _symmetrize(c)
    c[..., 0, 0, 0] = 0.0
    if solenoidal:
        kd = wn.kd
        proj = (kd[0] * c[0] + kd[1] * c[1] + kd[2] * c[2]) / wn.kd2_safe
        c = np.stack([c[i] - kd[i] * proj for i in range(3)])
    return SpectralField(grid, c, divergence_free=solenoidal)
