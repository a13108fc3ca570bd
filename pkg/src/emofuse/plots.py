"""Report figures rendered to PNG files next to the delimited output.

Uses the non-interactive backend; figures carry no timestamps, so two
runs with identical inputs write byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from emofuse.labels import EMOTION_CLASSES
from emofuse.metrics import EvaluationReport


def _save(fig, path):
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)


def confusion_heatmap(report: EvaluationReport, title: str, path):
    conf = report.confusion.astype(np.float64)
    row_sums = conf.sum(axis=1, keepdims=True)
    rates = np.divide(conf, row_sums, out=np.zeros_like(conf), where=row_sums > 0)
    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    im = ax.imshow(rates, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(report.class_names)))
    ax.set_yticks(range(len(report.class_names)))
    ax.set_xticklabels(report.class_names, rotation=45, ha="right")
    ax.set_yticklabels(report.class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{title} (MAF {report.maf_percent:.1f}, acc {report.accuracy:.1f})")
    for i in range(conf.shape[0]):
        for j in range(conf.shape[1]):
            if conf[i, j] > 0:
                color = "white" if rates[i, j] > 0.5 else "black"
                ax.text(j, i, int(conf[i, j]), ha="center", va="center", color=color, fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    _save(fig, path)


def class_distribution(counts_by_partition: dict[str, dict[str, int]], path):
    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    width = 0.8 / max(1, len(counts_by_partition))
    x = np.arange(len(EMOTION_CLASSES))
    for i, (part, counts) in enumerate(counts_by_partition.items()):
        vals = [counts.get(c, 0) for c in EMOTION_CLASSES]
        ax.bar(x + i * width, vals, width, label=part)
    ax.set_xticks(x + width * (len(counts_by_partition) - 1) / 2)
    ax.set_xticklabels(EMOTION_CLASSES, rotation=45, ha="right")
    ax.set_ylabel("utterances")
    ax.set_title("class distribution")
    ax.legend()
    _save(fig, path)


def snr_histogram(snr_db: list[float], path):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.hist(np.asarray(snr_db), bins=30, color="#4878a8", edgecolor="black", linewidth=0.4)
    ax.set_xlabel("estimated SNR (dB)")
    ax.set_ylabel("utterances")
    ax.set_title("SNR distribution")
    _save(fig, path)


def training_curves(histories: dict[str, list[dict]], path):
    """One panel per model: train/validation loss and validation macro-F."""
    n = max(1, len(histories))
    fig, axes = plt.subplots(1, n, figsize=(4.6 * n, 3.6), squeeze=False)
    for ax, (name, epochs) in zip(axes[0], histories.items()):
        xs = np.arange(1, len(epochs) + 1)
        ax.plot(xs, [e["train_loss"] for e in epochs], label="train loss")
        ax.plot(xs, [e["val_loss"] for e in epochs], label="val loss")
        ax2 = ax.twinx()
        ax2.plot(xs, [100 * e["val_maf"] for e in epochs], color="tab:green", label="val MAF")
        ax2.set_ylabel("val MAF (%)", color="tab:green")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(name)
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)
