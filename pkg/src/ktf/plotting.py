"""Matplotlib figures written next to the CLI's CSV/JSON outputs.

Everything renders off-screen with the Agg backend and writes PNG files;
nothing here is needed by the numerical code.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_fit(y, theta, path, title: str = "") -> Path:
    """Data and fit side by side (2-d) or overlaid (1-d)."""
    y = np.asarray(y)
    theta = np.asarray(theta)
    if y.ndim == 1:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(y, ".", color="0.6", label="data")
        ax.plot(theta, "-", color="C3", label="fit")
        ax.legend()
    elif y.ndim == 2:
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.8))
        lo, hi = float(min(y.min(), theta.min())), float(max(y.max(), theta.max()))
        for ax, arr, name in zip(axes, (y, theta), ("data", "fit")):
            im = ax.imshow(arr, cmap="viridis", vmin=lo, vmax=hi, origin="lower")
            ax.set_title(name)
            ax.set_xticks([])
            ax.set_yticks([])
        fig.colorbar(im, ax=axes, shrink=0.8)
    else:
        mid = tuple(s // 2 for s in y.shape[2:])
        return plot_fit(y[(slice(None), slice(None)) + mid], theta[(slice(None), slice(None)) + mid], path, title)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_surface(values, path, title: str = "") -> Path:
    values = np.asarray(values)
    fig = plt.figure(figsize=(5.5, 4.5))
    ax = fig.add_subplot(projection="3d")
    I, J = np.meshgrid(np.arange(values.shape[0]), np.arange(values.shape[1]), indexing="ij")
    ax.plot_surface(I, J, values, cmap="viridis", linewidth=0)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_rates(table, path) -> Path:
    """Log-log best MSE against n per method, with one-sd error bars."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for m in table.methods():
        rows = table.method_rows(m)
        n = np.array([r.n for r in rows])
        e = np.array([r.best_mse for r in rows])
        s = np.array([r.sd for r in rows])
        ax.errorbar(n, e, yerr=s, marker="o", capsize=3, label=m)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("MSE")
    ax.set_title(f"{table.experiment}, k={table.k}, d={table.d}")
    ax.legend()
    return _save(fig, path)


def plot_traces(traces, path, x: str = "iteration") -> Path:
    """Relative suboptimality traces; ``traces`` maps a label to ``(times, subopt)``."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, (times, sub) in traces.items():
        sub = np.maximum(np.asarray(sub), 1e-16)
        xs = np.arange(1, sub.size + 1) if x == "iteration" else np.asarray(times)
        ax.plot(xs, sub, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("iteration" if x == "iteration" else "seconds")
    ax.set_ylabel("relative suboptimality")
    ax.legend()
    return _save(fig, path)
