"""Static figures for the CLI reports.

Figures are built on :class:`matplotlib.figure.Figure` directly, so nothing here
touches pyplot state or needs a display.
"""

from __future__ import annotations

import os

import numpy as np
from matplotlib.figure import Figure


def _save(fig: Figure, path: str | os.PathLike) -> str:
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None} if str(path).endswith(".png") else None)
    return str(path)


def plot_fdr_curves(z, counts_table: dict, curve_table: dict, path, title: str = "") -> str:
    """Histogram with the fitted mixture and null, above the fdr curve(s)."""
    fig = Figure(figsize=(6.4, 6.0))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    mid = np.asarray(counts_table["z"])
    width = mid[1] - mid[0]
    ax1.bar(mid, counts_table["count"], width=width, color="0.8", edgecolor="0.6", lw=0.5)
    ax1.plot(mid, counts_table["fitted"], color="C0", label="fitted f")
    ax1.plot(mid, counts_table["null_fitted"], color="C3", ls="--", label="p0 f0")
    ax1.set_ylabel("count")
    ax1.legend(frameon=False)
    g = np.asarray(curve_table["z"])
    ax2.plot(g, curve_table["fdr"], color="k", label="fdr")
    if "fdrA" in curve_table:
        ax2.plot(g, curve_table["fdrA"], color="C1", label="fdr_A")
    if "fdrB" in curve_table:
        ax2.plot(g, curve_table["fdrB"], color="C2", ls=":", label="fdr_B")
    ax2.axhline(0.2, color="0.5", lw=0.5)
    ax2.set_ylim(-0.02, 1.05)
    ax2.set_xlabel("z")
    ax2.set_ylabel("local fdr")
    ax2.legend(frameon=False)
    if title:
        ax1.set_title(title)
    return _save(fig, path)


def plot_class_curves(curve_table: dict, counts_table: dict, path, title: str = "") -> str:
    """Fitted Prob{A|z}, the null version, and the bin proportions."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.subplots()
    mid = np.asarray(counts_table["z"])
    r = np.asarray(counts_table["r_A"], dtype=float)
    ok = np.isfinite(r)
    ax.plot(mid[ok], r[ok], "o", ms=3, color="0.5", label="bin proportion")
    ax.plot(curve_table["z"], curve_table["piA"], color="C0", label="pi_A(z)")
    ax.plot(curve_table["z"], curve_table["piA0"], color="C3", ls="--", label="pi_A0(z)")
    ax.set_xlabel("z")
    ax.set_ylabel("Prob{A | z}")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_sd_curves(sd_table: dict, path, title: str = "") -> str:
    """Standard deviations of log fdr, log R_A and log fdr_A against z."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.subplots()
    z = sd_table["z"]
    ax.plot(z, sd_table["sd_log_fdrA"], color="k", label="sd log fdr_A")
    ax.plot(z, sd_table["sd_log_RA"], color="C0", ls="--", label="sd log R_A")
    ax.plot(z, sd_table["sd_log_fdr"], color="C3", ls=":", label="sd log fdr")
    ax.set_xlabel("z")
    ax.set_ylabel("standard deviation")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_fdrA_band(grid, fdrA_reps, true_fdrA, true_fdr, path, title: str = "") -> str:
    """Replicated fdr_A curves against the true class and combined curves."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.subplots()
    for row in np.asarray(fdrA_reps):
        ax.plot(grid, row, color="0.75", lw=0.5)
    ax.plot(grid, true_fdrA, color="k", lw=2, label="true fdr_A")
    ax.plot(grid, true_fdr, color="C3", ls="--", label="combined fdr")
    ax.set_ylim(-0.02, 1.05)
    ax.set_xlabel("z")
    ax.set_ylabel("fdr")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_adjustment(x, z_raw, z_adj, path, n_bins: int = 40) -> str:
    """Binned medians of raw and adjusted z against the covariate."""
    x = np.asarray(x, dtype=float)
    edges = np.quantile(x, np.linspace(0, 1, n_bins + 1))
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    med = lambda v: np.array([np.median(v[idx == k]) if np.any(idx == k) else np.nan  # noqa: E731
                              for k in range(n_bins)])
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.subplots()
    ax.plot(centers, med(np.asarray(z_raw)), "o-", ms=3, color="0.5", label="raw")
    ax.plot(centers, med(np.asarray(z_adj)), "o-", ms=3, color="C0", label="adjusted")
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xlabel("covariate")
    ax.set_ylabel("median z")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_set_histogram(z, in_set, path, title: str = "") -> str:
    """Set members against the complement on a common density scale."""
    z = np.asarray(z, dtype=float)
    in_set = np.asarray(in_set, dtype=bool)
    bins = np.linspace(z.min(), z.max(), 41)
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.subplots()
    ax.hist(z[~in_set], bins=bins, density=True, histtype="step", color="0.4", label="others")
    ax.hist(z[in_set], bins=bins, density=True, alpha=0.6, color="C1", label="set")
    ax.set_xlabel("z")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)
