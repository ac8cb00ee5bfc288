"""Stand-alone studies behind the CLI subcommands other than simulate/audit.

Each task writes CSV/JSON tables plus figures into an output directory and
returns ``True`` when its checks pass.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .contraction import BilinearFixedPointProblem, solve_fixed_point
from .harness import ScenarioSpec, ratio_sweep, separation_sweep, strictly_decreasing, taylor_green_errors
from .mild_solver import solve
from .operators import pressure_from_velocity
from .plotting import plot_matrix, plot_residuals, plot_slice, plot_sweeps
from .snapshot_io import write_json, write_rows_csv
from .spectral_field import GridSpec, irfft3, lebesgue_norm, sobolev_norm
from .symmetry_profiles import (
    AnalyticDatum,
    ProfileSpec,
    compactness_diagnostic,
    place_profile,
    sample_datum,
    similarity_frame_track,
)
from .trajectory import Trajectory


def scalar_contraction_suite(count: int = 50, q_max: float = 0.99, eta: float = 1.0, tol: float = 1e-15):
    """Solve ``x = y + eta x^2`` for ``4 eta y`` evenly spread over ``[0, q_max]``.

    Returns rows ``(q, y, x, exact, error, iterations, max_iterate_over_R, result)``.
    """
    rows = []
    for q in np.linspace(0.0, q_max, count):
        y = q / (4.0 * eta)
        res = solve_fixed_point(BilinearFixedPointProblem(
            y, lambda a, b: eta * a * b, eta=eta, tol=tol, max_iter=100_000))
        exact = 2.0 * y / (1.0 + math.sqrt(1.0 - q))
        R = res.radius_bound
        over = max(res.iterate_norms) / R if R > 0 else 0.0
        rows.append((float(q), y, float(res.solution), exact, abs(float(res.solution) - exact),
                     res.iterations, over, res))
    return rows


def contraction_demo(out: Path, tol: float = 1e-12) -> bool:
    rows = scalar_contraction_suite()
    write_rows_csv(out / "contraction.csv",
                   ["q", "y", "fixed_point", "exact", "error", "iterations", "max_iterate_over_radius"],
                   [r[:7] for r in rows])
    picks = rows[::10]
    plot_residuals([r[7].residual_history for r in picks], [f"4ηy = {r[0]:.2f}" for r in picks],
                   out / "figures" / "contraction_residuals.png")
    return all(r[4] <= tol and r[6] <= 1.0 + 1e-15 and r[7].converged for r in rows)


SCALES = (0.5, 2.0, 4.0)


def scaling_rows(datum: AnalyticDatum, grid: GridSpec, scales: Sequence[float] = SCALES):
    """Relative change of the ``H^1/2`` and ``L^3`` norms of a placed profile.

    The box is scaled with the profile (side ``lam L``), so the sampled values
    are the same numbers and the comparison isolates the norm computation.
    """
    base = place_profile(ProfileSpec(datum), grid)
    h0, l0 = sobolev_norm(base, 0.5), lebesgue_norm(base, 3)
    rows = []
    for lam in scales:
        g = grid.rescaled(lam)
        f = place_profile(ProfileSpec(datum, lam), g)
        rows.append((lam, abs(sobolev_norm(f, 0.5) - h0) / h0, abs(lebesgue_norm(f, 3) - l0) / l0))
    return rows


def scaling_check(specs: Sequence[ScenarioSpec], out: Path, tol: float = 1e-6) -> bool:
    table = []
    ok = True
    for s in specs:
        for lam, dh, dl in scaling_rows(s.datum, s.grid):
            table.append((s.name, lam, dh, dl))
            ok &= dh <= tol and dl <= tol
    write_rows_csv(out / "scaling.csv", ["scenario", "lambda", "rel_change_hdot_half", "rel_change_l3"], table)
    if table:
        lams = [r[1] for r in table if r[0] == table[0][0]]
        plot_sweeps({"lambda": (lams, {"H^1/2": [r[2] for r in table[: len(lams)]],
                                       "L^3": [r[3] for r in table[: len(lams)]]})},
                    out / "figures" / "scaling.png")
    return ok


def profile_study(out: Path, grid_n: int = 128, ratio_width: float = 1.0, separation_width: float = 0.3,
                  tol: float = 0.05) -> bool:
    """Scale-ratio and separation sweeps of two localized vortices."""
    grid = GridSpec(grid_n)
    ratio = ratio_sweep(AnalyticDatum.localized_vortex(ratio_width), grid)
    sep = separation_sweep(AnalyticDatum.localized_vortex(separation_width), grid)
    rows = [("ratio", *r) for r in ratio] + [("separation", *r) for r in sep]
    write_rows_csv(out / "profiles.csv", ["sweep", "parameter", "pythagorean_defect", "inner_product"], rows)
    plot_sweeps({
        "scale ratio": ([r[0] for r in ratio], {"defect": [r[1] for r in ratio], "|inner|": [r[2] for r in ratio]}),
        "separation": ([r[0] for r in sep], {"defect": [r[1] for r in sep], "|inner|": [r[2] for r in sep]}),
    }, out / "figures" / "profiles.png")
    ok = True
    for sweep in (ratio, sep):
        ok &= strictly_decreasing([r[1] for r in sweep]) and strictly_decreasing([abs(r[2]) for r in sweep])
        ok &= sweep[-1][1] <= tol
    return bool(ok)


def pressure_report(specs: Sequence[ScenarioSpec], out: Path, tol: float = 1e-6) -> bool:
    """Pressure of each initial datum; Taylor-Green data are checked against the closed form."""
    report = {}
    ok = True
    for s in specs:
        u0 = sample_datum(s.datum, s.grid)
        p = irfft3(pressure_from_velocity(u0).coeffs, s.grid.n_modes)
        entry = {"max_abs": float(np.max(np.abs(p))), "l2": float(np.sqrt(np.sum(p * p) * s.grid.cell_volume))}
        if s.datum.kind == "taylor_green":
            tr = Trajectory.from_snapshots(s.grid, [0.0], [u0])
            entry["oracle_error"] = taylor_green_errors(tr, s.datum)[1]
            ok &= entry["oracle_error"] <= tol
        report[s.name] = entry
        plot_slice(p, out / "figures" / f"pressure_{s.name}.png", f"pressure, {s.name}")
    write_json(out / "pressure.json", report)
    return bool(ok)


def compactness_report(specs: Sequence[ScenarioSpec], out: Path, samples: int = 5, normalize: bool = True) -> bool:
    report = {}
    for s in specs:
        traj = solve(sample_datum(s.datum, s.grid), s.horizon, s.solver)
        frame = similarity_frame_track(traj)
        idx = np.unique(np.linspace(0, len(traj) - 1, min(samples, len(traj))).round().astype(int))
        idx = [i for i in idx if frame.defined[i]]
        times = [float(traj.times[i]) for i in idx]
        m = compactness_diagnostic(traj, frame, times, normalize_amplitude=normalize) if times else np.zeros((0, 0))
        report[s.name] = {
            "sample_times": times,
            "lambda": [float(frame.lambda_t[i]) for i in idx],
            "center": [[float(v) for v in frame.x_t[i]] for i in idx],
            "degenerate_axes": [[bool(v) for v in frame.degenerate[i]] for i in idx],
            "distances": m.tolist(),
        }
        if m.size:
            plot_matrix(m, out / "figures" / f"compactness_{s.name}.png", s.name)
    write_json(out / "compactness.json", report)
    return True
