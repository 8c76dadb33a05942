"""Deterministic SVG figures (fixed hash salt, no timestamps)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "ssdl"
matplotlib.rcParams["svg.fonttype"] = "path"

__all__ = ["save_svg", "loglog_plot", "histogram_plot"]


def save_svg(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def loglog_plot(path, xs, ys, *, scatter=None, ref_slope=None, xlabel="", ylabel="", title=""):
    """Line of ``ys`` against ``xs`` on log axes, optional raw points and a reference slope."""
    fig, ax = plt.subplots(figsize=(5, 4))
    if scatter is not None:
        sx, sy = scatter
        ax.scatter(sx, sy, s=10, alpha=0.5, color="0.5", label="replicates")
    ax.plot(xs, ys, "o-", color="C0", label="median")
    if ref_slope is not None and len(xs) and np.all(np.asarray(ys) > 0):
        x0, y0 = xs[0], ys[0]
        xr = np.array([xs[0], xs[-1]], dtype=float)
        ax.plot(xr, y0 * (xr / x0) ** ref_slope, "--", color="C3", label=f"slope {ref_slope:.3g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    return save_svg(fig, path)


def histogram_plot(path, samples: dict, title=""):
    """One panel per entry of ``samples`` (integer-valued draws)."""
    fig, axes = plt.subplots(1, len(samples), figsize=(4 * len(samples), 3.5), squeeze=False)
    for ax, (name, vals) in zip(axes[0], samples.items()):
        vals = np.asarray(vals)
        if vals.size:
            lo, hi = int(vals.min()), int(vals.max())
            ax.hist(vals, bins=np.arange(lo, hi + 2) - 0.5, color="C0")
        ax.set_xlabel(name)
        ax.set_ylabel("draws")
    fig.suptitle(title)
    return save_svg(fig, path)
