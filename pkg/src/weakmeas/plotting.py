"""Figure rendering for the command line reports.

Import stays local to the CLI's --figure branches; the library itself never
pulls in matplotlib.  All functions write to a file and return the path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analytics import AverageDistribution
from .trajectories import EnsembleStats, TrajectoryRecord

__all__ = [
    "save_histogram",
    "save_distribution",
    "save_disturbance_curve",
    "save_saturation_curve",
    "save_running_average",
]


def _finish(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_histogram(stats: EnsembleStats, analytic: AverageDistribution | None,
                   path: str) -> str:
    """Trajectory-average histogram as a density, analytic curve overlaid."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    widths = np.diff(stats.bin_edges)
    density = stats.empirical_masses / widths
    ax.bar(stats.bin_edges[:-1], density, width=widths, align="edge",
           color="#9ecae1", edgecolor="#3182bd", linewidth=0.6,
           label=f"{stats.trajectories} trajectories")
    if analytic is not None:
        ax.plot(analytic.grid, analytic.density, color="#d62728", lw=1.6,
                label="analytic distribution")
        for center in analytic.centers:
            ax.axvline(center, color="0.6", ls="--", lw=0.8)
    ax.set_xlabel("trajectory average")
    ax.set_ylabel("probability density")
    ax.legend(frameon=False)
    return _finish(fig, path)


def save_distribution(dist: AverageDistribution, path: str) -> str:
    """Analytic running-average distribution."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(dist.grid, dist.density, color="#d62728", lw=1.6)
    for center in dist.centers:
        ax.axvline(center, color="0.6", ls="--", lw=0.8)
    ax.set_xlabel(f"average of {dist.steps} readings")
    ax.set_ylabel("probability density")
    return _finish(fig, path)


def save_disturbance_curve(epsilons, values, strong_limit: float,
                           path: str) -> str:
    """Disturbance against target statistical error, log-scaled error axis."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogx(epsilons, values, color="#2ca02c", lw=1.6)
    ax.axhline(strong_limit, color="0.5", ls="--", lw=0.9,
               label="projective limit")
    ax.set_xlabel("target statistical error")
    ax.set_ylabel("state disturbance")
    ax.legend(frameon=False)
    return _finish(fig, path)


def save_saturation_curve(f_values, ratios, path: str) -> str:
    """Accuracy saturation against the truncation point in standard deviations."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(f_values, ratios, color="#1f77b4", lw=1.6)
    ax.axhline(1.0, color="0.6", ls=":", lw=0.8)
    ax.set_xlabel("truncation point (standard deviations)")
    ax.set_ylabel("accuracy saturation")
    ax.set_ylim(0.0, 1.05)
    return _finish(fig, path)


def save_running_average(record: TrajectoryRecord, eigenvalues,
                         path: str) -> str:
    """Per-step running average of one trajectory (needs retained outcomes)."""
    if record.outcomes.outcomes is None:
        raise ValueError("running-average figure needs retained outcomes")
    outs = record.outcomes.outcomes
    running = np.cumsum(outs) / np.arange(1, outs.size + 1)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(np.arange(1, outs.size + 1), running, color="#1f77b4", lw=1.0)
    for s in eigenvalues:
        ax.axhline(float(s), color="0.6", ls="--", lw=0.8)
    ax.set_xlabel("readings")
    ax.set_ylabel("running average")
    return _finish(fig, path)
