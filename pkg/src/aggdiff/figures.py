"""Report figures rendered to files (headless matplotlib)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grid import Field


def density_panels(records, ubar: float, path, title: str = "") -> None:
    """One row of heatmaps, one per (t, field) record, shared color scale."""
    records = list(records)
    vmax = max(float(f.values.max()) for _, f in records)
    vmax = max(vmax, 1e-12)
    n = len(records)
    fig, axes = plt.subplots(1, n, figsize=(3.1 * n + 1.2, 3.4), constrained_layout=True)
    if n == 1:
        axes = [axes]
    for ax, (t, f) in zip(axes, records):
        g = f.grid
        im = ax.imshow(f.values, origin="lower", extent=(g.xmin, g.xmax, g.ymin, g.ymax),
                       vmin=0.0, vmax=vmax, cmap="viridis", interpolation="nearest")
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel("x")
    axes[0].set_ylabel("y")
    fig.colorbar(im, ax=axes, shrink=0.85, label="density u")
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def heatmap(field: Field, ubar: float, path, title: str = "") -> None:
    g = field.grid
    fig, ax = plt.subplots(figsize=(4.6, 4.0), constrained_layout=True)
    im = ax.imshow(field.values, origin="lower", extent=(g.xmin, g.xmax, g.ymin, g.ymax),
                   vmin=0.0, cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="density u")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def mass_curves(curves, path, title: str = "total mass over time") -> None:
    """Line plot of labelled (times, values[, band]) mass histories.

    Each curve is (label, times, values) or (label, times, values, std);
    a std entry draws a +-1 std band around the curve.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.2), constrained_layout=True)
    for curve in curves:
        label, times, values = curve[0], np.asarray(curve[1]), np.asarray(curve[2])
        ax.plot(times, values, label=label, linewidth=1.6)
        if len(curve) > 3 and curve[3] is not None:
            std = np.asarray(curve[3])
            ax.fill_between(times, values - std, values + std, alpha=0.25)
    ax.set_xlabel("t")
    ax.set_ylabel("total mass")
    ax.set_title(title)
    ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def convergence_plot(xs, errors, path, xlabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 4.0), constrained_layout=True)
    ax.loglog(xs, errors, "o-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("relative L2 error")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    fig.savefig(path, dpi=130)
    plt.close(fig)
