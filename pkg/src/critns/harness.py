"""Scenario configuration, audits and batch execution.

A suite is an INI file. ``[suite]`` holds ``output``, ``threads`` and
``seed``; every ``[scenario.NAME]`` section describes one run::

    [scenario.tg]
    datum = taylor_green          ; or band_limited_random, localized_vortex
    amplitude = 1.0
    grid = 16
    dt = 0.015625
    horizon = 0.25
    audits = divergence, energy, taylor_green
    tol.taylor_green = 1e-6       ; absolute bound overriding the default

See ``SCENARIO_KEYS`` for the full key list. Wall-clock times are written to
``timing.log`` and kept out of every CSV/JSON artifact, so two runs with the
same configuration produce byte-identical tables.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .criticality import (
    decay_audit,
    energy_audit,
    energy_quadrature_bound,
    l2_energy_defect,
    l2_energy_quadrature_bound,
)
from .errors import ConfigError, CritnsError
from .mild_solver import SolverConfig, cross_check_uniqueness, solve
from .operators import QuadratureRule, pressure_from_velocity
from .snapshot_io import atomic_write_text, export_field, write_json, write_norms_csv
from .spectral_field import GridSpec, divergence_defect, irfft3, lebesgue_norm
from .symmetry_profiles import (
    AnalyticDatum,
    ProfileSpec,
    inner_product_orthogonality,
    place_profile,
    pythagorean_defect,
    sample_datum,
    scale_solution,
)
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

THREADS_ENV = "CRITNS_THREADS"

SCENARIO_KEYS = {
    "datum", "amplitude", "seed", "slope", "band", "width", "period",
    "grid", "box_length", "dealias_fraction",
    "dt", "min_dt", "picard_tol", "picard_max_iter", "quadrature", "quadrature_nodes",
    "blowup_threshold", "horizon", "audits", "snapshot_every",
}
SUITE_KEYS = {"output", "threads", "seed"}


# --- scenario description ------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    datum: AnalyticDatum
    grid: GridSpec
    solver: SolverConfig
    horizon: float
    audits: tuple[str, ...] = ()
    output_dir: str = "."
    tolerances: Mapping[str, float] = field(default_factory=dict)
    snapshot_every: int = 1

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        unknown = [a for a in self.audits if a not in AUDITS]
        if unknown:
            raise ValueError(f"unknown audits {unknown}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        """Canonical serialization; the output directory is not part of it."""
        s = self.solver
        return {
            "name": self.name,
            "datum": asdict(self.datum),
            "grid": {"n_modes": self.grid.n_modes, "box_length": self.grid.box_length,
                     "dealias_fraction": self.grid.dealias_fraction},
            "solver": {"dt": s.dt, "min_dt": s.min_dt, "picard_tol": s.picard_tol,
                       "picard_max_iter": s.picard_max_iter,
                       "norm_blowup_threshold": s.norm_blowup_threshold,
                       "quadrature": s.duhamel_quadrature.kind,
                       "quadrature_nodes": s.duhamel_quadrature.nodes},
            "horizon": self.horizon,
            "audits": list(self.audits),
            "tolerances": dict(sorted(self.tolerances.items())),
            "snapshot_every": self.snapshot_every,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class AuditResult:
    name: str
    value: float
    bound: float
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunManifest:
    scenario: str
    config_hash: str
    tool_version: str
    start_time: float
    end_time: float
    artifacts: dict[str, Any]
    terminated_reason: str | None
    status: str  # "pass", "fail" or "error"
    audits: list[AuditResult] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> dict[str, Any]:
        """Deterministic part of the manifest (no wall-clock times)."""
        return {
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "artifacts": self.artifacts,
            "terminated_reason": self.terminated_reason,
            "status": self.status,
            "audits": {a.name: a.passed for a in self.audits},
            "error": self.error,
        }


# --- audits ----------------------------------------------------------------------

AuditFn = Callable[[ScenarioSpec, Trajectory], AuditResult]
AUDITS: dict[str, AuditFn] = {}
DEFAULT_BOUNDS: dict[str, float | None] = {}


def _audit(name: str, bound: float | None):
    def deco(fn):
        AUDITS[name] = fn
        DEFAULT_BOUNDS[name] = bound
        return fn
    return deco


def _bound(spec: ScenarioSpec, name: str, computed: float | None = None) -> float:
    if name in spec.tolerances:
        return float(spec.tolerances[name])
    b = DEFAULT_BOUNDS[name]
    return float(computed if b is None else b)


def _result(spec: ScenarioSpec, name: str, value: float, computed_bound: float | None = None, **detail) -> AuditResult:
    b = _bound(spec, name, computed_bound)
    return AuditResult(name, float(value), b, bool(value <= b), detail)


@_audit("divergence", 1e-10)
def _audit_divergence(spec, traj):
    return _result(spec, "divergence", max(divergence_defect(u) for u in traj.snapshots))


@_audit("energy", None)
def _audit_energy(spec, traj):
    bound = energy_quadrature_bound(traj)
    return _result(spec, "energy", energy_audit(traj), 10.0 * bound, quadrature_bound=bound)


@_audit("l2_energy", None)
def _audit_l2_energy(spec, traj):
    bound = l2_energy_quadrature_bound(traj)
    return _result(spec, "l2_energy", l2_energy_defect(traj), 10.0 * bound, quadrature_bound=bound)


@_audit("decay", 0.2)
def _audit_decay(spec, traj):
    rep = decay_audit(traj)
    ratio = rep.final / rep.initial if rep.initial > 0 else 0.0
    return _result(spec, "decay", ratio, initial=rep.initial, final=rep.final, window_max=rep.window_max)


def taylor_green_errors(traj: Trajectory, datum: AnalyticDatum) -> tuple[float, float]:
    """Largest ``L^3`` velocity error and max pressure error against the decaying vortex.

    Velocity ``u0 exp(-2 k^2 t)``; pressure ``A^2 (cos 2kx + cos 2ky) exp(-4 k^2 t) / 4``
    with ``k = 2 pi / period``.
    """
    g = traj.grid
    k = 2.0 * math.pi / datum.period
    u0 = sample_datum(datum, g)
    X, Y, _ = g.mesh()
    p0 = datum.amplitude**2 * (np.cos(2 * k * X) + np.cos(2 * k * Y)) / 4.0
    verr = perr = 0.0
    for t, u in zip(traj.times, traj.snapshots):
        verr = max(verr, lebesgue_norm(u - u0 * math.exp(-2 * k * k * t), 3))
        p = irfft3(pressure_from_velocity(u).coeffs, g.n_modes)
        perr = max(perr, float(np.max(np.abs(p - p0 * math.exp(-4 * k * k * t)))))
    return verr, perr


@_audit("taylor_green", 1e-6)
def _audit_taylor_green(spec, traj):
    verr, perr = taylor_green_errors(traj, spec.datum)
    return _result(spec, "taylor_green", max(verr, perr), velocity_l3=verr, pressure_max=perr)


@_audit("uniqueness", 1e-5)
def _audit_uniqueness(spec, traj):
    u0 = traj.snapshots[0]
    return _result(spec, "uniqueness", cross_check_uniqueness(u0, spec.horizon, spec.solver, spec.solver))


SCALING_FACTOR = 2.0


def scaling_discrepancy(spec: ScenarioSpec, traj: Trajectory, lam: float = SCALING_FACTOR) -> float:
    """Relative ``L^3`` gap between solve-then-scale and scale-then-solve at matched times."""
    scaled = scale_solution(traj, lam)
    grid = scaled.grid
    u0 = place_profile(ProfileSpec(spec.datum, 1.0 / lam), grid)
    cfg = replace(spec.solver, dt=spec.solver.dt / lam**2, min_dt=spec.solver.min_dt / lam**2)
    direct = solve(u0, spec.horizon / lam**2, cfg)
    if len(direct) != len(scaled) or not np.allclose(direct.times, scaled.times, rtol=1e-12, atol=0):
        raise CritnsError("rescaled time lattices differ")
    gap = max(lebesgue_norm(a - b, 3) for a, b in zip(direct.snapshots, scaled.snapshots))
    ref = max(r.l3 for r in scaled.records)
    return gap / ref if ref > 0 else gap


@_audit("scaling", 1e-6)
def _audit_scaling(spec, traj):
    return _result(spec, "scaling", scaling_discrepancy(spec, traj), factor=SCALING_FACTOR)


def separation_sweep(datum: AnalyticDatum, grid: GridSpec, fractions: Sequence[float] = (1 / 8, 1 / 4, 1 / 2)):
    """Defect and inner product of two copies of ``datum`` with cores ``s L`` apart along x."""
    L = grid.box_length
    c = L / 4
    rows = []
    for f in fractions:
        p1 = ProfileSpec(datum, 1.0, (c, c, c))
        p2 = ProfileSpec(datum, 1.0, ((c + f * L) % L, c, c))
        rows.append((f * L, pythagorean_defect([p1, p2], None, grid), inner_product_orthogonality(p1, p2, grid)))
    return rows


def ratio_sweep(datum: AnalyticDatum, grid: GridSpec, ratios: Sequence[float] = (2, 4, 16)):
    """Defect and inner product of two concentric copies with scales 1 and 1/ratio."""
    L = grid.box_length
    c = (L / 2, L / 2, L / 2)
    rows = []
    for r in ratios:
        p1 = ProfileSpec(datum, 1.0, c)
        p2 = ProfileSpec(datum, 1.0 / r, c)
        rows.append((r, pythagorean_defect([p1, p2], None, grid), inner_product_orthogonality(p1, p2, grid)))
    return rows


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


@_audit("profiles", 0.05)
def _audit_profiles(spec, traj):
    rows = separation_sweep(spec.datum, spec.grid)
    defects = [r[1] for r in rows]
    inner = [abs(r[2]) for r in rows]
    res = _result(spec, "profiles", defects[-1], separations=[r[0] for r in rows],
                  defects=defects, inner_products=[r[2] for r in rows])
    res.passed = res.passed and strictly_decreasing(defects) and strictly_decreasing(inner)
    return res


REQUIRES_KIND = {"taylor_green": "taylor_green", "profiles": "localized_vortex"}


# --- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class Overrides:
    output: str | None = None
    seed: int | None = None
    grid: int | None = None
    horizon: float | None = None
    threads: int | None = None


@dataclass
class SuiteConfig:
    output: Path
    threads: int
    seed: int
    scenarios: list[ScenarioSpec]
    extra: dict[str, dict[str, str]] = field(default_factory=dict)


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_ENTRY = re.compile(r"^(\s*)([^=:\s;#][^=:]*?)\s*[=:]\s*")


def _line_index(text: str) -> dict[tuple[str, str], tuple[int, int]]:
    """``(section, key) -> (line, column of the value)`` for every entry."""
    where: dict[tuple[str, str], tuple[int, int]] = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            where[(section, "")] = (no, m.start(1) + 1)
            continue
        m = _ENTRY.match(line)
        if m and section is not None and not line.startswith((" ", "\t")):
            where[(section, m.group(2).strip().lower())] = (no, m.end() + 1)
    return where


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None,
                                     default_section="__defaults__")


def _convert(where, section: str, key: str, raw: str, kind: Callable[[str], Any]):
    try:
        return kind(raw)
    except (TypeError, ValueError) as exc:
        line, col = where.get((section, key), (None, None))
        raise ConfigError(f"[{section}] {key}: {exc}", line, col) from None


def _band(raw: str) -> tuple[float, float]:
    parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
    if len(parts) != 2:
        raise ValueError("band needs two numbers")
    return float(parts[0]), float(parts[1])


def _positive_int(raw: str) -> int:
    v = int(raw)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def parse_suite(text: str, base_dir: str | os.PathLike = ".", overrides: Overrides = Overrides()) -> SuiteConfig:
    """Parse suite text into scenario specs.

    Raises:
        ConfigError: with the line (and column where known) of the offending entry.
    """
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.split(" (")[0] if hasattr(exc, "message") else str(exc), exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    where = _line_index(text)

    suite = dict(cp["suite"]) if cp.has_section("suite") else {}
    for key in suite:
        if key not in SUITE_KEYS:
            raise ConfigError(f"unknown [suite] key {key!r}", *where.get(("suite", key), (None, None)))
    output = Path(overrides.output or suite.get("output", "critns-output"))
    if not output.is_absolute():
        output = Path(base_dir) / output
    seed = overrides.seed if overrides.seed is not None else _convert(where, "suite", "seed", suite.get("seed", "0"), int)
    threads = _convert(where, "suite", "threads", suite.get("threads", "1"), _positive_int)

    specs: list[ScenarioSpec] = []
    extra: dict[str, dict[str, str]] = {}
    for index, section in enumerate(s for s in cp.sections() if s.startswith("scenario.")):
        specs.append(_scenario(cp[section], section, index, seed, overrides, output, where))
    for section in cp.sections():
        if section != "suite" and not section.startswith("scenario."):
            extra[section] = dict(cp[section])
    names = [s.name for s in specs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError(f"duplicate scenario names {sorted(dup)}")
    return SuiteConfig(output, threads, seed, specs, extra)


def _scenario(sec, section: str, index: int, suite_seed: int, ov: Overrides, output: Path, where) -> ScenarioSpec:
    name = section.split(".", 1)[1].strip()
    if not name or not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError(f"bad scenario name {name!r}", *where.get((section, ""), (None, None)))
    tol: dict[str, float] = {}
    for key, raw in sec.items():
        if key.startswith("tol."):
            audit = key[4:]
            if audit not in AUDITS:
                raise ConfigError(f"tolerance for unknown audit {audit!r}", *where.get((section, key), (None, None)))
            tol[audit] = _convert(where, section, key, raw, float)
        elif key not in SCENARIO_KEYS:
            raise ConfigError(f"unknown key {key!r}", *where.get((section, key), (None, None)))
    if "datum" not in sec or "horizon" not in sec:
        raise ConfigError(f"[{section}] needs 'datum' and 'horizon'", *where.get((section, ""), (None, None)))

    def get(key, default, kind=float):
        return _convert(where, section, key, sec.get(key, default), kind) if key in sec or default is not None else None

    seed = suite_seed + index if (ov.seed is not None or "seed" not in sec) else get("seed", None, int)
    try:
        datum = AnalyticDatum(
            kind=sec["datum"].strip(),
            amplitude=get("amplitude", "1.0"),
            seed=seed,
            slope=get("slope", str(-5.0 / 3.0)),
            band=get("band", "1 3", _band),
            width=get("width", "0.5"),
            period=get("period", repr(2 * math.pi)),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}] datum: {exc}", *where.get((section, "datum"), (None, None))) from None
    n = ov.grid if ov.grid is not None else get("grid", "32", int)
    try:
        grid = GridSpec(n, get("box_length", repr(2 * math.pi)), get("dealias_fraction", repr(2 / 3)))
        solver = SolverConfig(
            dt=get("dt", repr(1 / 64)),
            duhamel_quadrature=QuadratureRule(sec.get("quadrature", "gauss-legendre").strip(),
                                              get("quadrature_nodes", "8", int)),
            picard_tol=get("picard_tol", "1e-12"),
            picard_max_iter=get("picard_max_iter", "50", int),
            norm_blowup_threshold=get("blowup_threshold", "1e3"),
            min_dt=get("min_dt", None) if "min_dt" in sec else None,
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}", *where.get((section, ""), (None, None))) from None
    horizon = ov.horizon if ov.horizon is not None else get("horizon", None)
    audits = tuple(a for a in re.split(r"[,\s]+", sec.get("audits", "")) if a)
    for a in audits:
        if a not in AUDITS:
            raise ConfigError(f"unknown audit {a!r}", *where.get((section, "audits"), (None, None)))
        need = REQUIRES_KIND.get(a)
        if need and datum.kind != need:
            raise ConfigError(f"audit {a!r} needs a {need} datum", *where.get((section, "audits"), (None, None)))
    if not horizon > 0:
        raise ConfigError("horizon must be positive", *where.get((section, "horizon"), (None, None)))
    return ScenarioSpec(name, datum, grid, solver, float(horizon), audits, str(output / name), tol,
                        get("snapshot_every", "1", _positive_int))


def load_suite(path: str | os.PathLike, overrides: Overrides = Overrides()) -> SuiteConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_suite(text, Path.cwd(), overrides)


def default_suite_path() -> Path:
    return Path(__file__).with_name("data") / "default_suite.ini"


def resolve_threads(cli: int | None, configured: int) -> int:
    """``--threads`` wins over ``CRITNS_THREADS``, which wins over the config file."""
    if cli is not None:
        return max(1, cli)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return configured


# --- execution ---------------------------------------------------------------------

def run_scenario(spec: ScenarioSpec, run_audits: bool = True) -> RunManifest:
    """Solve, audit and persist one scenario under ``spec.output_dir``.

    Library errors are caught and recorded as status ``error``; audit failures
    give status ``fail``. Artifact paths in the manifest are relative to the
    scenario directory.
    """
    from .plotting import plot_norms

    out = Path(spec.output_dir)
    start = time.time()
    artifacts: dict[str, Any] = {}
    audits: list[AuditResult] = []
    reason = None
    error = None
    try:
        out.mkdir(parents=True, exist_ok=True)
        u0 = sample_datum(spec.datum, spec.grid)
        traj = solve(u0, spec.horizon, spec.solver)
        reason = traj.terminated_reason
        write_norms_csv(out / "norms.csv", traj)
        artifacts["norms"] = "norms.csv"
        snaps = []
        for i in range(0, len(traj), spec.snapshot_every):
            rel = f"snapshots/s{i:05d}.crns"
            export_field(out / rel, traj.snapshots[i])
            snaps.append({"index": i, "t": float(traj.times[i]), "path": rel})
        artifacts["snapshots"] = snaps
        artifacts["times"] = [float(t) for t in traj.times]
        if run_audits:
            for name in spec.audits:
                audits.append(AUDITS[name](spec, traj))
            if reason != "horizon_reached":
                audits.append(AuditResult("completion", 0.0, 0.0, False, {"terminated_reason": reason}))
            write_json(out / "audits.json", {a.name: _jsonable(asdict(a)) for a in audits})
            artifacts["audits"] = "audits.json"
        plot_norms(traj, out / "figures" / "norms.png", spec.name)
        artifacts["figures"] = ["figures/norms.png"]
        status = "pass" if all(a.passed for a in audits) else "fail"
    except (CritnsError, ValueError, OSError, FloatingPointError) as exc:
        status = "error"
        error = f"{type(exc).__name__}: {exc}"
        logger.error("scenario failed", extra={"diagnostic": {"scenario": spec.name, "error": error}})
    end = time.time()
    manifest = RunManifest(spec.name, spec.config_hash(), __version__, start, end, artifacts,
                           reason, status, audits, error)
    try:
        body = manifest.to_json()
        body["config"] = spec.to_dict()
        write_json(out / "manifest.json", _jsonable(body))
        atomic_write_text(out / "timing.log", f"start {start:.3f}\nend {end:.3f}\nelapsed {end - start:.3f}\n")
    except OSError as exc:
        manifest.status = "error"
        manifest.error = f"OSError: {exc}"
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class SuiteSummary:
    manifests: list[RunManifest]

    @property
    def exit_code(self) -> int:
        if any(m.status == "error" for m in self.manifests):
            return 2
        if any(m.status == "fail" for m in self.manifests):
            return 1
        return 0

    def to_json(self) -> dict[str, Any]:
        return {
            "scenarios": [{"name": m.scenario, "status": m.status,
                           "audits": {a.name: a.passed for a in m.audits}} for m in self.manifests],
            "passed": sum(m.status == "pass" for m in self.manifests),
            "failed": sum(m.status == "fail" for m in self.manifests),
            "errors": sum(m.status == "error" for m in self.manifests),
        }


def _worker(args: tuple[ScenarioSpec, bool]) -> RunManifest:
    return run_scenario(*args)


def run_specs(specs: Sequence[ScenarioSpec], output: Path, threads: int = 1, run_audits: bool = True) -> SuiteSummary:
    """Run scenarios (in a process pool when ``threads > 1``) and write ``summary.json``."""
    jobs = [(s, run_audits) for s in specs]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            manifests = list(pool.map(_worker, jobs))
    else:
        manifests = [_worker(j) for j in jobs]
    summary = SuiteSummary(manifests)
    write_json(Path(output) / "summary.json", summary.to_json())
    return summary


def run_suite(path: str | os.PathLike, overrides: Overrides = Overrides(), run_audits: bool = True) -> SuiteSummary:
    cfg = load_suite(path, overrides)
    threads = resolve_threads(overrides.threads, cfg.threads)
    return run_specs(cfg.scenarios, cfg.output, threads, run_audits)
