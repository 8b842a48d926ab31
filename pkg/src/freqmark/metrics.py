"""Detection metrics: Mann-Whitney AUC, confusion-matrix rates, rank correlation."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateGroundTruth, EmptyClass


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.shape[0])
    # boundaries of runs of equal values in sorted order
    starts = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1])))
    ends = np.concatenate((starts[1:], [x.shape[0]]))
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    return ranks


def auc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """P(pos > neg) + 0.5 P(pos == neg), from the rank-sum statistic."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise EmptyClass("auc needs at least one positive and one negative score")
    r = average_ranks(np.concatenate((pos, neg)))
    u = r[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


class ClassificationMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float


def confusion(labels, predictions) -> tuple[int, int, int, int]:
    y = np.asarray(labels, dtype=bool)
    p = np.asarray(predictions, dtype=bool)
    if y.shape != p.shape:
        raise ValueError("labels and predictions must have equal length")
    tp = int(np.sum(y & p))
    fp = int(np.sum(~y & p))
    fn = int(np.sum(y & ~p))
    tn = int(np.sum(~y & ~p))
    return tp, fp, fn, tn


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> ClassificationMetrics:
    if tp + fn == 0 or fp + tn == 0:
        raise DegenerateGroundTruth("ground truth needs at least one positive and one negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ClassificationMetrics(precision, recall, f1, fp / (fp + tn), fn / (tp + fn))


def classification_metrics(labels, predictions) -> ClassificationMetrics:
    return metrics_from_counts(*confusion(labels, predictions))


def spearman(x, y) -> float:
    rx, ry = average_ranks(x), average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx ** 2).sum() * (ry ** 2).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else 0.0


def boundary_hits(true_labels, pred_labels, tolerance: int = 5) -> tuple[int, int]:
    """(matched, total) true label changes with a predicted change within ``tolerance``."""
    y = np.asarray(true_labels, dtype=np.int8)
    p = np.asarray(pred_labels, dtype=np.int8)
    tb = np.flatnonzero(np.diff(y)) + 1
    pb = np.flatnonzero(np.diff(p)) + 1
    if pb.size == 0:
        return 0, int(tb.size)
    hits = sum(int(np.min(np.abs(pb - b)) <= tolerance) for b in tb)
    return hits, int(tb.size)
