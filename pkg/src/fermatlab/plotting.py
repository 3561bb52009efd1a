"""Static SVG figures written next to the CSV/JSON outputs.

SVGs are saved with a fixed hash salt and no date, so identical data gives
byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "fermatlab",
    "svg.fonttype": "none",
})

SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig, filename):
    fig.tight_layout()
    fig.savefig(filename, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def convergence_figure(report, filename, title=None):
    """|dT/deps| against grid size on log-log axes, physical solid, baseline dashed."""
    fig, ax = plt.subplots(figsize=(6, 4))
    grids = np.asarray(report.grid_sizes, dtype=float)
    for j, rec in enumerate(report.records):
        mags = np.abs(rec.slopes)
        color = f"C{j % 10}"
        ax.plot(grids, np.where(mags > 0, mags, np.nan), "o-", color=color, lw=1.2,
                label=f"dir {j} (m={rec.mode})")
        if report.baseline is not None:
            bm = np.abs(report.baseline.records[j].slopes)
            ax.plot(grids, np.where(bm > 0, bm, np.nan), "s--", color=color, lw=0.8, alpha=0.6)
    ref = grids[0] ** 2 * np.nanmax([abs(r.slopes[0]) for r in report.records] or [1.0]) / grids ** 2
    if np.all(np.isfinite(ref)) and np.all(ref > 0):
        ax.plot(grids, ref, "k:", lw=1, label=r"$n^{-2}$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("grid size n")
    ax.set_ylabel(r"$|dT/d\varepsilon|$ at $\varepsilon \to 0$")
    ax.set_title(title or f"{report.functional_id}: {report.verdict}")
    ax.legend(fontsize=7, ncol=2)
    _save(fig, filename)


def multiplier_figure(traces: dict, filename, title="multiplier spread per node"):
    """Node spread of each multiplier trace against normalized path position."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, (name, tr) in enumerate(sorted(traces.items())):
        s = np.asarray(tr.node_spread, dtype=float)
        tau = np.linspace(0.0, 1.0, s.shape[0])
        ax.plot(tau, np.where(s > 0, s, np.nan), color=f"C{j}", lw=1.0, label=f"{name} ({tr.spread:.2e})")
    ax.set_yscale("log")
    ax.set_xlabel(r"path position $\tau$")
    ax.set_ylabel("relative multiplier spread")
    ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, filename)


def sweep_figure(values, series: dict, filename, xlabel, title="sweep"):
    """One log-log line per metric series against the swept value."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.asarray(values, dtype=float)
    for j, (name, ys) in enumerate(sorted(series.items())):
        y = np.abs(np.asarray(ys, dtype=float))
        ax.plot(x, np.where(y > 0, y, np.nan), "o-", color=f"C{j % 10}", lw=1.0, label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    _save(fig, filename)
