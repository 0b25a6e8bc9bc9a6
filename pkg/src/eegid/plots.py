"""Figure rendering for run artifacts (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from eegid.evaluate import CorrelationTable, EvaluationReport


def save_confusion_matrix(report: EvaluationReport, path: str | Path):
    k = report.confusion.shape[0]
    fig, ax = plt.subplots(figsize=(5.5, 4.8))
    im = ax.imshow(report.confusion, cmap="Blues")
    ax.set_xlabel("predicted ID")
    ax.set_ylabel("true ID")
    ax.set_xticks(range(k))
    ax.set_yticks(range(k))
    threshold = report.confusion.max() / 2.0 if report.confusion.max() else 0.5
    for i in range(k):
        for j in range(k):
            color = "white" if report.confusion[i, j] > threshold else "black"
            ax.text(j, i, str(report.confusion[i, j]), ha="center", va="center",
                    color=color, fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_title(f"accuracy {report.accuracy:.4f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_roc_curves(report: EvaluationReport, path: str | Path):
    fig, ax = plt.subplots(figsize=(5.5, 4.8))
    for k, pts in enumerate(report.roc or []):
        auc = report.auc[k]
        label = f"class {k}" + (f" (AUC {auc:.4f})" if auc is not None else " (undefined)")
        ax.plot(pts[:, 0], pts[:, 1], label=label, linewidth=1.2)
    ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=7, loc="lower right")
    if report.macro_auc is not None:
        ax.set_title(f"one-vs-rest ROC (macro AUC {report.macro_auc:.4f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_loss(history: list[float], path: str | Path):
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.plot(history, linewidth=0.9)
    ax.set_xlabel("iteration")
    ax.set_ylabel("batch loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_band_accuracy(accuracies: dict[str, float], path: str | Path):
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    names = list(accuracies)
    values = [accuracies[name] for name in names]
    bars = ax.bar(names, values, color="steelblue")
    best = int(np.argmax(values))
    bars[best].set_color("darkorange")
    ax.set_ylabel("held-out accuracy")
    ax.set_ylim(0.0, 1.05)
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 0.01, f"{value:.3f}",
                ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_correlation_heatmap(table: CorrelationTable, path: str | Path):
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    im = ax.imshow(table.mean_abs_r, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_yticks(range(len(table.bands)), table.bands)
    ax.set_xticks(range(len(table.subjects)), [f"s{sid}" for sid in table.subjects])
    ax.set_xlabel("subject")
    fig.colorbar(im, ax=ax, label="mean inter-subject |r|")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
