"""Static figures for a scenario run, written next to the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .discretization import WELLS, Domain  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "xtick.top": True,
    "ytick.right": True,
    "lines.linewidth": 1.2,
    "savefig.bbox": "tight",
}
WELL_COLORS = {"L": "tab:blue", "M": "tab:orange", "R": "tab:green"}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_populations(series, path, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, w in enumerate(WELLS):
            ax.plot(series.times, series.populations[:, k], color=WELL_COLORS[w], label=f"$n_{w}$")
        ax.set_xlabel(r"$t\ [\hbar/E_R]$")
        ax.set_ylabel("bosons in well")
        ax.set_ylim(-0.05, series.n_bosons + 0.05)
        ax.legend(loc="best")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_probabilities(series, path, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, values in series.probabilities.items():
            if name != "untracked":
                ax.plot(series.times, values, label=name)
        ax.set_xlabel(r"$t\ [\hbar/E_R]$")
        ax.set_ylabel("probability")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="best")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_densities(series, indices, path, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for j in indices:
            ax.plot(series.x, series.densities[j], label=f"t = {series.times[j]:.4g}")
        for w in WELLS[1:]:
            ax.axvline(Domain.for_well(w).bounds[0], color="0.6", lw=0.6, ls=":")
        ax.set_xlabel(r"$x\ [\kappa^{-1}]$")
        ax.set_ylabel(r"$\rho(x)$")
        ax.legend(loc="best")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_spectrum(table, path, labels=None, title=None):
    """On-site energies against coupling; ``labels`` restricts the rows drawn."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 5.0))
        rows = table.rows if labels is None else [table.row(lab) for lab in labels]
        for row in rows:
            ls = {"single": ":", "pair": "--"}.get(row.mode.value, "-")
            ax.plot(table.g_samples, row.energies, ls=ls, lw=0.9, label=str(row.label))
        for c in table.crossings:
            ax.plot([c.g_star], [c.energy], "k.", ms=6)
        ax.set_xlabel(r"$g$")
        ax.set_ylabel(r"on-site energy $[E_R]$")
        if len(rows) <= 12:
            ax.legend(loc="best", ncol=2)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def render_run(directory, series, summary, table=None, snapshots=()):
    """All figures of one run; returns the written paths."""
    directory = Path(directory)
    title = f"{summary['name']}: V0={summary['V0']:.4g}, g={summary['g']:.5g}"
    paths = [plot_populations(series, directory / "populations.png", title)]
    if any(k != "untracked" for k in series.probabilities):
        paths.append(plot_probabilities(series, directory / "probabilities.png", title))
    if series.densities is not None and len(snapshots):
        paths.append(plot_densities(series, snapshots, directory / "density.png", title))
    if table is not None:
        paths.append(plot_spectrum(table, directory / "spectrum.png", title=title))
    return paths
