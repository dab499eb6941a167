"""Figure rendering for reports: score distributions, ROC curves, training curves.

Everything renders through the Agg backend straight to files; nothing
here opens a window.  The CLI only imports this module when a figures
directory is requested.
"""

from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .engine import validate_scores  # noqa: E402


def save_score_histogram(id_scores, ood_scores, path, bins: int = 40) -> str:
    """Overlaid ID/OOD score histograms (OOD side optional)."""
    a = validate_scores(id_scores, name="id_scores")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(a, bins=bins, alpha=0.6, label=f"ID (n={a.size})", color="tab:blue")
    if ood_scores is not None and len(np.atleast_1d(ood_scores)):
        b = validate_scores(ood_scores, name="ood_scores")
        ax.hist(b, bins=bins, alpha=0.6, label=f"OOD (n={b.size})", color="tab:red")
    ax.set_xlabel("score (log-sum-exp of logits)")
    ax.set_ylabel("count")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def save_roc_curve(id_scores, ood_scores, path) -> str:
    """ROC curve sweeping the score threshold (TPR on ID vs FPR on OOD)."""
    a = validate_scores(id_scores, name="id_scores")
    b = validate_scores(ood_scores, name="ood_scores")
    thresholds = np.unique(np.concatenate([a, b]))
    tpr = [1.0] + [float(np.mean(a > t)) for t in thresholds] + [0.0]
    fpr = [1.0] + [float(np.mean(b > t)) for t in thresholds] + [0.0]
    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    ax.plot(fpr, tpr, color="tab:blue")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate (OOD kept)")
    ax.set_ylabel("true positive rate (ID kept)")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def save_training_curves(history, path) -> str:
    """Loss per epoch with the learning-rate schedule on a twin axis."""
    epochs = [h.epoch for h in history]
    losses = [h.loss for h in history]
    lrs = [h.lr for h in history]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(epochs, losses, color="tab:blue", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy", color="tab:blue")
    ax.grid(alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(epochs, lrs, color="tab:orange", drawstyle="steps-post", label="lr")
    ax2.set_ylabel("learning rate", color="tab:orange")
    ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def save_confusion_heatmap(confusion, path) -> str:
    """Confusion counts as an annotated heatmap."""
    grid = np.asarray(confusion)
    k = grid.shape[0]
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    im = ax.imshow(grid, cmap="Blues")
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(grid[i, j])), ha="center", va="center", fontsize=8)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_xticks(range(k))
    ax.set_yticks(range(k))
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)
