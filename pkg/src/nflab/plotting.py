"""Static PNG figures written next to the CSV output (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated runs byte-stable
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_series(path, x, series: dict, *, xlabel="", ylabel="", title="",
                logx=False, logy=False, marker=None):
    """Several named curves over a common abscissa."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        y = np.asarray(y, dtype=float)
        if logy:
            y = np.where(y > 0, y, np.nan)
        ax.plot(x, y, label=label, marker=marker)
    ax.set_xscale("log" if logx else "linear")
    ax.set_yscale("log" if logy else "linear")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_trace(path, trace):
    """Energy summands and the conductance norm against time."""
    t = trace.column("t")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for name in ("diffusion", "metabolic", "pumping", "pressure", "total"):
        y = trace.column(name)
        if np.any(y > 0):
            ax1.plot(t, np.where(y > 0, y, np.nan), label=name)
    ax1.set_yscale("log")
    ax1.set_xlabel("t")
    ax1.set_ylabel("energy")
    ax1.legend(fontsize=8)
    m = trace.column("m_l2")
    ax2.plot(t, np.where(m > 0, m, np.nan))
    ax2.set_yscale("log")
    ax2.set_xlabel("t")
    ax2.set_ylabel("||m||_2")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_field(path, grid, field, *, title="", overlays: dict | None = None):
    """Plot a scalar or vector field.

    In 1D every component becomes a curve (plus optional overlay curves);
    in 2D the node magnitude is drawn as an image with arrows on top.
    """
    field = np.asarray(field, dtype=float)
    if grid.dim == 1:
        x = grid.axis_coords
        fig, ax = plt.subplots(figsize=(6, 4))
        comps = field.reshape((-1,) + grid.shape)
        for k, comp in enumerate(comps):
            ax.plot(x, comp, label=title or f"component {k}")
        for label, y in (overlays or {}).items():
            ax.plot(x, np.asarray(y).reshape(grid.shape), "--", label=label)
        ax.set_xlabel("x")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    else:
        fig, ax = plt.subplots(figsize=(5, 4.5))
        mag = field if field.shape == grid.shape else np.sqrt(np.sum(field ** 2, axis=0))
        im = ax.imshow(mag.T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
        fig.colorbar(im, ax=ax)
        if field.shape != grid.shape:
            step = max(1, grid.n // 16)
            xs, ys = np.meshgrid(grid.axis_coords[::step], grid.axis_coords[::step], indexing="ij")
            ax.quiver(xs, ys, field[0][::step, ::step], field[1][::step, ::step], color="w")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    return _save(fig, path)
