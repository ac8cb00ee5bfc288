"""Time-ordered snapshot container shared by the solver, operators and audits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np

from .errors import CoverageError, DomainError
from .spectral_field import GridSpec, SpectralField

if TYPE_CHECKING:
    from .criticality import NormRecord

TERMINATION_REASONS = ("horizon_reached", "blowup_detected", "picard_failure")
TIME_TOL = 1e-12


@dataclass(eq=False)
class Trajectory:
    """Snapshots ``u(t_n)`` with one norm record per time.

    ``info`` carries solver bookkeeping (estimated maximal time, failed
    interval length, step-size history) and is never used for numerics.
    """

    grid: GridSpec
    times: np.ndarray
    snapshots: list[SpectralField]
    records: list["NormRecord"]
    terminated_reason: str = "horizon_reached"
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise DomainError("a trajectory needs at least one time")
        if self.times[0] != 0.0:
            raise DomainError(f"trajectory times must start at 0, got {self.times[0]}")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        if not (len(self.snapshots) == len(self.records) == self.times.size):
            raise DomainError("times, snapshots and records must have equal length")
        if self.terminated_reason not in TERMINATION_REASONS:
            raise DomainError(f"unknown termination reason {self.terminated_reason!r}")
        for s in self.snapshots:
            if s.grid != self.grid:
                raise DomainError("snapshot grid differs from trajectory grid")

    @classmethod
    def from_snapshots(
        cls,
        grid: GridSpec,
        times: Sequence[float],
        snapshots: Sequence[SpectralField],
        terminated_reason: str = "horizon_reached",
        info: dict[str, Any] | None = None,
    ) -> "Trajectory":
        """Build a trajectory, computing the norm records along the way."""
        from .criticality import record

        recs: list[NormRecord] = []
        prev = None
        for t, u in zip(times, snapshots):
            prev = record(u, float(t), prev)
            recs.append(prev)
        return cls(grid, np.asarray(times, float), list(snapshots), recs,
                   terminated_reason, dict(info or {}))

    def __len__(self) -> int:
        return self.times.size

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def covers(self, t: float) -> bool:
        return 0.0 <= t <= self.final_time + TIME_TOL * max(1.0, self.final_time)

    def require(self, t: float) -> None:
        if not self.covers(t):
            raise CoverageError(f"time {t} outside the sampled range [0, {self.final_time}]")

    def index_of(self, t: float) -> int:
        """Index of the snapshot at time ``t``; raises if ``t`` is off-lattice."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > TIME_TOL * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not a snapshot time")
        return i

    def at(self, t: float) -> SpectralField:
        """Linear interpolation between neighbouring snapshots."""
        self.require(t)
        t = min(float(t), self.final_time)
        j = int(np.searchsorted(self.times, t, side="right"))
        if j >= len(self.times):
            return self.snapshots[-1]
        i = j - 1
        if abs(self.times[i] - t) <= TIME_TOL * max(1.0, t):
            return self.snapshots[i]
        theta = (t - self.times[i]) / (self.times[j] - self.times[i])
        a, b = self.snapshots[i], self.snapshots[j]
        return a.replace((1.0 - theta) * a.coeffs + theta * b.coeffs,
                         a.divergence_free and b.divergence_free)

    def coefficient_stack(self) -> np.ndarray:
        return np.stack([s.coeffs for s in self.snapshots])

    def norm_series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])
