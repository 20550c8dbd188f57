"""Report figures rendered to image files with the non-interactive backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_training_curves(epochs, path):
    """Train loss (scaled MSE) and validation MAE per epoch."""
    if not epochs:
        return None
    x = [row["epoch"] for row in epochs]
    fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(x, [row["train_loss"] for row in epochs], color="tab:blue")
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss (scaled MSE)")
    ax_val.plot(x, [row["val_mae"] for row in epochs], color="tab:orange")
    ax_val.set_xlabel("epoch")
    ax_val.set_ylabel("validation MAE")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_comparison(rows, path, metric="mae"):
    """Bar chart of per-variant mean metric with the seed std as error bars."""
    if not rows:
        return None
    names = [r["variant"] for r in rows]
    means = np.array([r[f"{metric}_mean"] for r in rows])
    stds = np.array([r[f"{metric}_std"] for r in rows])
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(rows) + 1.5), 3.5))
    ax.bar(range(len(rows)), means, yerr=stds, color="tab:gray", capsize=3)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel(f"test {metric.upper()}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_attention_maps(grid, weights, views, path):
    """One heatmap per view of the interval-averaged weight on the grid.

    ``weights`` is (T', N, V).
    """
    weights = np.asarray(weights, dtype=np.float64)
    mean = weights.reshape(-1, weights.shape[-2], weights.shape[-1]).mean(axis=0)
    fig, axes = plt.subplots(1, len(views), figsize=(3.6 * len(views), 3.2), squeeze=False)
    for v, (ax, name) in enumerate(zip(axes[0], views)):
        im = ax.imshow(mean[:, v].reshape(grid.rows, grid.cols), origin="lower",
                       vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_title(f"w_{name}")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
