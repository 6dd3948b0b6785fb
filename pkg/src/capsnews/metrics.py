"""Confusion-matrix metrics.

Everything is derived from integer counts with plain float division so a
brute-force recount of the same pairs reproduces each number exactly.
For binary tasks class 1 is the positive class and the headline
precision/recall/F1 refer to it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    accuracy: float
    confusion: np.ndarray          # (C, C) int64; rows true, cols predicted
    per_class: list
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_f1: float

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    def positive(self) -> ClassMetrics:
        """Binary headline row (class 1)."""
        if self.num_classes != 2:
            raise DimensionError(f"positive() on a {self.num_classes}-class report")
        return self.per_class[1]


def confusion_matrix(true_labels, predicted_labels, num_classes: int) -> np.ndarray:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise DimensionError(
            f"label arrays must be equal-length 1-D, got {t.shape} and {p.shape}"
        )
    if t.size and (t.min() < 0 or t.max() >= num_classes
                   or p.min() < 0 or p.max() >= num_classes):
        raise DimensionError(f"labels out of range for {num_classes} classes")
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    return m


def _safe_div(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics_from_confusion(confusion) -> MetricsReport:
    m = np.asarray(confusion, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise DimensionError(f"confusion matrix must be square CxC (C >= 2), got {m.shape}")
    total = int(m.sum())
    accuracy = _safe_div(int(np.trace(m)), total)
    per_class = []
    for c in range(m.shape[0]):
        tp = int(m[c, c])
        fp = int(m[:, c].sum()) - tp
        fn = int(m[c, :].sum()) - tp
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall) if precision + recall else 0.0
        per_class.append(ClassMetrics(precision, recall, f1, tp + fn))
    n = len(per_class)
    macro_p = sum(c.precision for c in per_class) / n
    macro_r = sum(c.recall for c in per_class) / n
    macro_f1 = sum(c.f1 for c in per_class) / n
    weighted_f1 = (
        sum(c.f1 * c.support for c in per_class) / total if total else 0.0
    )
    return MetricsReport(accuracy, m, per_class, macro_p, macro_r, macro_f1, weighted_f1)


def metrics_from_pairs(true_labels, predicted_labels, num_classes: int) -> MetricsReport:
    return metrics_from_confusion(confusion_matrix(true_labels, predicted_labels, num_classes))


def headline_metric(report: MetricsReport) -> float:
    """Model-selection scalar: F1 of the positive class when binary, else accuracy."""
    if report.num_classes == 2:
        return report.per_class[1].f1
    return report.accuracy


def metrics_to_csv(report: MetricsReport, class_names) -> str:
    if len(class_names) != report.num_classes:
        raise DimensionError(
            f"{len(class_names)} class names for a {report.num_classes}-class report"
        )
    out = io.StringIO()
    out.write("metric,value\n")
    out.write(f"accuracy,{report.accuracy!r}\n")
    for name, c in zip(class_names, report.per_class):
        out.write(f"precision_{name},{c.precision!r}\n")
        out.write(f"recall_{name},{c.recall!r}\n")
        out.write(f"f1_{name},{c.f1!r}\n")
        out.write(f"support_{name},{c.support}\n")
    out.write(f"macro_precision,{report.macro_precision!r}\n")
    out.write(f"macro_recall,{report.macro_recall!r}\n")
    out.write(f"macro_f1,{report.macro_f1!r}\n")
    out.write(f"weighted_f1,{report.weighted_f1!r}\n")
    for i in range(report.num_classes):
        for j in range(report.num_classes):
            out.write(f"confusion_{i}_{j},{int(report.confusion[i, j])}\n")
    return out.getvalue()


def write_metrics_csv(report: MetricsReport, class_names, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(metrics_to_csv(report, class_names))
