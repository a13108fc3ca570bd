"""Confusion matrix, per-class F-score, macro-average F-score, accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from emofuse.labels import EMOTION_CLASSES
from emofuse.scorefile import ScoreMatrix


@dataclass
class EvaluationReport:
    class_names: tuple[str, ...]
    confusion: np.ndarray
    per_class_f1: np.ndarray
    maf: float  # macro-average F-score in [0, 1]
    accuracy: float  # percent
    support: np.ndarray

    @property
    def maf_percent(self) -> float:
        return 100.0 * self.maf


def confusion_matrix(y_true, y_pred, class_names: tuple[str, ...] = EMOTION_CLASSES) -> np.ndarray:
    """count[i][j] = items of true class i predicted as class j. Labels may be
    class names or integer indices."""
    index = {name: i for i, name in enumerate(class_names)}
    c = len(class_names)

    def to_idx(label):
        if isinstance(label, str):
            if label not in index:
                raise ValueError(f"label {label!r} outside vocabulary {class_names}")
            return index[label]
        i = int(label)
        if not 0 <= i < c:
            raise ValueError(f"label index {i} outside vocabulary of {c} classes")
        return i

    y_true = [to_idx(v) for v in y_true]
    y_pred = [to_idx(v) for v in y_pred]
    if len(y_true) != len(y_pred):
        raise ValueError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    conf = np.zeros((c, c), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        conf[t, p] += 1
    return conf


def macro_f1(confusion: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-class F1 and their unweighted mean over every vocabulary class.

    Zero-support and never-predicted classes score 0 (0/0 -> 0); the macro
    mean always divides by the full class count.
    """
    conf = np.asarray(confusion)
    if conf.size == 0 or conf.sum() == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(conf).astype(np.float64)
    pred_totals = conf.sum(axis=0).astype(np.float64)
    true_totals = conf.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred_totals, out=np.zeros_like(tp), where=pred_totals > 0)
    recall = np.divide(tp, true_totals, out=np.zeros_like(tp), where=true_totals > 0)
    pr = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    return f1, float(f1.mean())


def accuracy(confusion: np.ndarray) -> float:
    """100 * trace / N."""
    conf = np.asarray(confusion)
    n = conf.sum()
    if n == 0:
        raise ValueError("empty confusion matrix")
    return 100.0 * float(np.trace(conf)) / float(n)


def predictions_from_scores(scores: ScoreMatrix) -> list[str]:
    """Argmax per row; ties go to the lowest class index (frozen alphabetical order)."""
    idx = scores.values.argmax(axis=1)  # numpy argmax already takes the first maximum
    return [EMOTION_CLASSES[i] for i in idx]


def evaluate_scores(scores: ScoreMatrix, labels: dict[str, str]) -> EvaluationReport:
    """Score matrix + id->true-class mapping -> full report."""
    missing = [u for u in scores.ids if u not in labels]
    if missing:
        raise ValueError(f"no true label for utterances {missing[:5]}")
    y_true = [labels[u] for u in scores.ids]
    y_pred = predictions_from_scores(scores)
    conf = confusion_matrix(y_true, y_pred, EMOTION_CLASSES)
    f1, maf = macro_f1(conf)
    return EvaluationReport(
        class_names=EMOTION_CLASSES,
        confusion=conf,
        per_class_f1=f1,
        maf=maf,
        accuracy=accuracy(conf),
        support=conf.sum(axis=1),
    )


def format_report(report: EvaluationReport, title: str) -> str:
    """Machine-readable summary block plus an aligned confusion table."""
    lines = [
        f"#system: {title}",
        f"maf_percent\t{report.maf_percent:.4f}",
        f"accuracy_percent\t{report.accuracy:.4f}",
    ]
    for name, f1, sup in zip(report.class_names, report.per_class_f1, report.support):
        lines.append(f"f1\t{name}\t{f1:.6f}\t{int(sup)}")
    lines.append("")
    width = max(len(n) for n in report.class_names) + 1
    header = " " * width + " ".join(f"{n[:7]:>7s}" for n in report.class_names)
    lines.append("# confusion (rows = true, columns = predicted)")
    lines.append(header)
    for i, name in enumerate(report.class_names):
        row = " ".join(f"{int(v):>7d}" for v in report.confusion[i])
        lines.append(f"{name:<{width}s}{row}")
    return "\n".join(lines) + "\n"
