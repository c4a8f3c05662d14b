"""Figure rendering for the report-producing commands.

Everything here writes a file and returns its path; no interactive backends.
The CSV reports stay the primary output, figures are companions.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import SweepResult
from .moments import MomentTrajectory
from .sde import EnsembleStats

__all__ = ["save_sweep_plot", "save_ensemble_plot", "save_moments_plot"]


def save_sweep_plot(result: SweepResult, path: str) -> str:
    """Margin curve: sweep value vs critical variance, infeasible points marked."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    vals = np.array([pt.value for pt in result.points])
    margins = np.array([pt.sigma_star_sq for pt in result.points])
    ok = np.array([pt.feasible for pt in result.points], dtype=bool)
    finite = ok & np.isfinite(margins)
    ax.plot(vals[finite], margins[finite], "o-", color="tab:blue", label="sigma*^2")
    unbounded = ok & np.isinf(margins)
    if np.any(unbounded):
        ax.plot(vals[unbounded], np.full(unbounded.sum(), np.nan))
        for v in vals[unbounded]:
            ax.annotate("unbounded", (v, ax.get_ylim()[1]), fontsize=8,
                        ha="center", va="top")
    if np.any(~ok):
        ax.plot(vals[~ok], np.zeros((~ok).sum()), "x", color="tab:red",
                label="infeasible")
    if np.any(finite) and np.all(margins[finite] > 0):
        ax.set_yscale("log")
    ax.set_xlabel(f"{result.variable} [{result.units}]")
    ax.set_ylabel("critical variance")
    ax.grid(True, which="both", alpha=0.3)
    if np.any(~ok):
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_ensemble_plot(stats: EnsembleStats, path: str) -> str:
    """Two panels: deviation second moment with confidence band, frequency envelopes."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
    t = stats.times
    sm = stats.second_moment
    hw = stats.second_moment_halfwidth
    ax1.plot(t, sm, color="tab:blue", label="E[v'v]")
    ax1.fill_between(t, np.maximum(sm - hw, 0), sm + hw, color="tab:blue", alpha=0.25)
    if stats.proj_second_moment is not None:
        ax1.plot(t, stats.proj_second_moment, color="tab:orange",
                 label="projected E[x'x]")
    if np.all(sm > 0):
        ax1.set_yscale("log")
    ax1.set_ylabel("second moment")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(True, which="both", alpha=0.3)

    ax2.fill_between(t, stats.freq_min, stats.freq_max, color="tab:green",
                     alpha=0.3, label="generator frequency envelope")
    ax2.plot(t, stats.freq_min, color="tab:green", lw=0.8)
    ax2.plot(t, stats.freq_max, color="tab:green", lw=0.8)
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("frequency deviation [rad/s]")
    ax2.legend(loc="best", fontsize=8)
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_moments_plot(traj: MomentTrajectory, path: str) -> str:
    """Second-moment trace and mean norm along the moment ODE flow."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    traces = traj.traces
    ax.plot(traj.times, traces, color="tab:blue", label="tr E[x x']")
    mu_norm = np.linalg.norm(traj.mean, axis=1)
    ax.plot(traj.times, mu_norm, color="tab:orange", label="|E x|")
    if np.all(traces > 0):
        ax.set_yscale("log")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("moment magnitude")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
