"""Matplotlib figures rendered alongside the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport


def save_loss_curve(losses: list[float], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(losses) + 1), losses, lw=1.2, color="#2a6f97")
    ax.set_xlabel("iteration")
    ax.set_ylabel("total loss")
    ax.set_title("Training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_metric_bars(mean: MetricReport, path) -> None:
    names = list(MetricReport.COLUMNS)
    values = mean.row()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, values, color="#52796f")
    for x, v in enumerate(values):
        ax.text(x, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_title("Mean evaluation metrics")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_ablation_bars(means: dict, path) -> None:
    """Grouped NSS/CC bars across the four knowledge variants."""
    variants = list(means.keys())
    x = np.arange(len(variants))
    nss_vals = [means[v].nss for v in variants]
    cc_vals = [means[v].cc for v in variants]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.18, nss_vals, width=0.36, label="NSS", color="#2a6f97")
    ax.bar(x + 0.18, cc_vals, width=0.36, label="CC", color="#bc4749")
    ax.set_xticks(x)
    ax.set_xticklabels(variants)
    ax.set_title("Knowledge-source ablation (validation means)")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_prediction_gallery(samples, predictions, path, limit: int = 4) -> None:
    """Rows of (input image, ground-truth density, predicted map)."""
    n = min(limit, len(samples))
    fig, axes = plt.subplots(n, 3, figsize=(7.5, 2.5 * n), squeeze=False)
    for row in range(n):
        sample = samples[row]
        axes[row][0].imshow(np.transpose(sample.image, (1, 2, 0)))
        axes[row][0].set_title("image" if row == 0 else None, fontsize=9)
        axes[row][1].imshow(sample.density, cmap="magma")
        axes[row][1].set_title("ground truth" if row == 0 else None, fontsize=9)
        axes[row][2].imshow(predictions[row], cmap="magma")
        axes[row][2].set_title("prediction" if row == 0 else None, fontsize=9)
        for ax in axes[row]:
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
