"""Evaluation metrics for the fake-news (binary) and hostility (multi-label) tasks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import HOSTILE

TABLE1_COLUMNS = ("accuracy", "precision", "recall", "f1")
TABLE1_HEADER = ("Accuracy", "Precision", "Recall", "f1-score")
# per-class columns in the order of the published hostility table
TABLE2_CLASSES = ("defamation", "fake", "hate", "offensive")
TABLE2_HEADER = ("Coarse Grained Hostility f1", "Defamation f1", "Fake f1", "Hate f1",
                 "Offensive f1", "Weighted Fine Grained f1")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class MetricsReport:
    kind: str  # "binary" or "multilabel"
    values: dict

    def __getitem__(self, key):
        return self.values[key]


def _safe_div(a, b):
    return np.divide(a, b, out=np.zeros_like(a, dtype=np.float64), where=b > 0)


def confusion_counts(gold, pred, n_classes=2):
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    if gold.shape != pred.shape:
        raise MetricsError("gold and pred lengths differ")
    classes = np.arange(n_classes)
    g = gold[:, None] == classes
    p = pred[:, None] == classes
    tp = (g & p).sum(axis=0)
    return ConfusionCounts(tp, (~g & p).sum(axis=0), (g & ~p).sum(axis=0), g.sum(axis=0))


def per_class_prf(counts):
    prec = _safe_div(counts.tp, counts.tp + counts.fp)
    rec = _safe_div(counts.tp, counts.tp + counts.fn)
    f1 = _safe_div(2 * prec * rec, prec + rec)
    return prec, rec, f1


def binary_report(gold, pred):
    """Accuracy plus support-weighted precision, recall and F1."""
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    if len(gold) != len(pred):
        raise MetricsError("gold and pred lengths differ")
    if len(gold) == 0:
        raise MetricsError("nothing to evaluate")
    counts = confusion_counts(gold, pred, 2)
    prec, rec, f1 = per_class_prf(counts)
    w = counts.support / counts.support.sum()
    return MetricsReport("binary", {
        "accuracy": float(np.mean(gold == pred)),
        "precision": float(w @ prec),
        "recall": float(w @ rec),
        "f1": float(w @ f1),
    })


def _hostile_matrix(label_sets):
    return np.array([[c in s for c in HOSTILE] for s in label_sets], dtype=bool).reshape(-1, 4)


def coarse_f1(gold_sets, pred_sets):
    """Weighted binary F1 after collapsing posts to hostile / non-hostile."""
    if len(gold_sets) != len(pred_sets):
        raise MetricsError("gold and pred lengths differ")
    g = _hostile_matrix(gold_sets).any(axis=1).astype(int)
    p = _hostile_matrix(pred_sets).any(axis=1).astype(int)
    return binary_report(g, p)["f1"]


def fine_grained_f1(gold_sets, pred_sets):
    """One-vs-rest F1 per hostile class and their support-weighted mean.

    Returns ``({class: f1}, weighted)``; classes with no gold positives score 0
    and carry no weight.
    """
    if len(gold_sets) != len(pred_sets):
        raise MetricsError("gold and pred lengths differ")
    g = _hostile_matrix(gold_sets)
    p = _hostile_matrix(pred_sets)
    counts = ConfusionCounts((g & p).sum(axis=0), (~g & p).sum(axis=0),
                             (g & ~p).sum(axis=0), g.sum(axis=0))
    _, _, f1 = per_class_prf(counts)
    total = counts.support.sum()
    if total == 0:
        raise MetricsError("undefined metric: no gold positives for any hostile class")
    per_class = {c: float(v) for c, v in zip(HOSTILE, f1)}
    return per_class, float(counts.support @ f1 / total)


def multilabel_report(gold_sets, pred_sets):
    per_class, weighted = fine_grained_f1(gold_sets, pred_sets)
    values = {"coarse_f1": coarse_f1(gold_sets, pred_sets)}
    values.update({f"{c}_f1": per_class[c] for c in TABLE2_CLASSES})
    values["weighted_fine_f1"] = weighted
    return MetricsReport("multilabel", values)


def scores_to_label_sets(scores, threshold=0.5):
    """Sigmoid outputs -> hostile label sets; an empty set means non-hostile."""
    return [frozenset(c for c, s in zip(HOSTILE, row) if s > threshold) for row in np.asarray(scores)]


def _columns(kind):
    if kind == "binary":
        return TABLE1_COLUMNS, TABLE1_HEADER
    if kind == "multilabel":
        return (("coarse_f1",) + tuple(f"{c}_f1" for c in TABLE2_CLASSES) + ("weighted_fine_f1",),
                TABLE2_HEADER)
    raise MetricsError(f"unknown report kind {kind!r}")


def format_report(report, kind=None, percent=False, header=False, style="csv"):
    """Render a report as a comma-separated row (6 decimals) or key=value lines."""
    kind = kind or report.kind
    if kind != report.kind:
        raise MetricsError(f"report is {report.kind!r}, cannot format as {kind!r}")
    keys, names = _columns(kind)
    missing = [k for k in keys if k not in report.values]
    if missing:
        raise MetricsError(f"report lacks {', '.join(missing)}")
    scale = 100.0 if percent else 1.0
    if style == "kv":
        return "".join(f"{k}={report.values[k] * scale:.6f}\n" for k in keys)
    row = ",".join(f"{report.values[k] * scale:.6f}" for k in keys)
    return (",".join(names) + "\n" + row + "\n") if header else row + "\n"
