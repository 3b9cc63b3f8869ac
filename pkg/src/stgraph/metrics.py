"""Classification metrics: per-class F1 / macro-F1 and per-class AP / mAP."""

from __future__ import annotations

import numpy as np


def per_class_prf(y_true, y_pred, classes=None) -> dict[int, dict[str, float]]:
    """Precision, recall, F1 and support for each class.

    Undefined ratios (no predictions / no support) count as 0.
    """
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if classes is None:
        classes = np.union1d(y_true, y_pred)
    out = {}
    for c in classes:
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        out[int(c)] = {"precision": p, "recall": r, "f1": f1, "support": tp + fn}
    return out


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean F1 over classes occurring in the labels or predictions."""
    table = per_class_prf(y_true, y_pred)
    if not table:
        return 0.0
    return float(np.mean([v["f1"] for v in table.values()]))


def average_precision(scores, positives) -> float:
    """Mean of precision@k over the ranks k of the positives (ties: input order)."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives).astype(bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, n_pos + 1) / ranks))


def per_class_ap(scores, labels) -> tuple[dict[int, float], list[int]]:
    """AP per class over frames; returns (ap by class, classes without positives)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    aps, skipped = {}, []
    for c in range(labels.shape[1]):
        if labels[:, c].sum() == 0:
            skipped.append(c)
            continue
        aps[c] = average_precision(scores[:, c], labels[:, c])
    return aps, skipped


def mean_average_precision(scores, labels) -> float:
    aps, _ = per_class_ap(scores, labels)
    return float(np.mean(list(aps.values()))) if aps else 0.0
