"""Figures written next to the CSV output. Uses the non-interactive Agg backend."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trajectory import Trajectory  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | os.PathLike) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_norms(traj: Trajectory, path: str | os.PathLike, title: str = "") -> str:
    """Critical norms and the energy dissipation over time."""
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    t = traj.times
    for name, label in (("hdot_half", r"$\|u\|_{\dot H^{1/2}}$"), ("l3", r"$\|u\|_{L^3}$"), ("l2", r"$\|u\|_{L^2}$")):
        a.plot(t, traj.norm_series(name), label=label)
    a.set_xlabel("t")
    if np.any(traj.norm_series("l2") > 0):
        a.set_yscale("log")
    a.legend()
    b.plot(t, traj.norm_series("sqrt_t_linf"), label=r"$\sqrt{t}\,\|u\|_\infty$")
    b.plot(t, traj.norm_series("hdot_threehalf") / np.maximum(traj.norm_series("hdot_half"), 1e-300),
           label="inverse length scale")
    b.set_xlabel("t")
    b.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweeps(sweeps: Mapping[str, tuple[Sequence[float], Mapping[str, Sequence[float]]]],
                path: str | os.PathLike) -> str:
    """One panel per sweep; each panel plots named series (absolute values, log scale)."""
    fig, axes = plt.subplots(1, len(sweeps), figsize=(5 * len(sweeps), 4), squeeze=False)
    for ax, (name, (x, series)) in zip(axes[0], sweeps.items()):
        for label, y in series.items():
            ax.semilogy(x, np.abs(np.asarray(y)) + 1e-300, "o-", label=label)
        ax.set_xlabel(name)
        ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_residuals(histories: Sequence[Sequence[float]], labels: Sequence[str], path: str | os.PathLike) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for h, lab in zip(histories, labels):
        ax.semilogy(np.arange(1, len(h) + 1), np.maximum(h, 1e-300), label=lab)
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_matrix(m: np.ndarray, path: str | os.PathLike, title: str = "") -> str:
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(m, cmap="viridis")
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_slice(values: np.ndarray, path: str | os.PathLike, title: str = "") -> str:
    """Mid-plane slice of a scalar field."""
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(values[:, :, values.shape[2] // 2].T, origin="lower", cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
