"""Ranking metrics for binary actionability scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels, need_negatives: bool = True) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError(f"scores/labels length mismatch: {s.shape} vs {y.shape}")
    if not np.isfinite(s).all():
        raise ValueError("non-finite score")
    if not y.any():
        raise ValueError("metric undefined: no positive labels")
    if need_negatives and y.all():
        raise ValueError("metric undefined: no negative labels")
    return s, y


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    s, y = _check(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricCurve:
    """Confusion counts at every distinct score threshold (predict positive if score >= t)."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @property
    def recall(self) -> np.ndarray:
        return self.tp / (self.tp + self.fn)

    @property
    def precision(self) -> np.ndarray:
        return self.tp / (self.tp + self.fp)

    @property
    def fpr(self) -> np.ndarray:
        return self.fp / np.maximum(self.fp + self.tn, 1)

    def roc_points(self) -> tuple[np.ndarray, np.ndarray]:
        return np.r_[0.0, self.fpr], np.r_[0.0, self.recall]

    def pr_points(self) -> tuple[np.ndarray, np.ndarray]:
        return self.recall, self.precision


def metric_curve(scores, labels) -> MetricCurve:
    s, y = _check(scores, labels, need_negatives=False)
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    # last index of each distinct score in descending order
    ends = np.r_[np.flatnonzero(np.diff(s_sorted)), s_sorted.size - 1]
    tp = np.cumsum(y_sorted)[ends]
    fp = (ends + 1) - tp
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    return MetricCurve(
        thresholds=s_sorted[ends],
        tp=tp.astype(np.int64),
        fp=fp.astype(np.int64),
        tn=(n_neg - fp).astype(np.int64),
        fn=(n_pos - tp).astype(np.int64),
    )


def pr_auc(scores, labels) -> float:
    """Average precision: sum over thresholds of (recall step) * precision."""
    curve = metric_curve(scores, labels)
    recall = curve.recall
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * curve.precision))


def precision_at_recall(scores, labels, recall: float) -> float:
    """Best precision among operating points whose recall reaches ``recall``."""
    if not 0.0 < recall <= 1.0:
        raise ValueError(f"recall target must be in (0, 1], got {recall}")
    curve = metric_curve(scores, labels)
    ok = curve.recall >= recall - 1e-12
    return float(curve.precision[ok].max())


def baseline_precision(labels) -> float:
    y = np.asarray(labels).astype(bool)
    if y.size == 0:
        raise ValueError("no labels")
    return float(y.mean())


def summarize(scores, labels, recalls=(0.90, 0.95, 0.99)) -> dict:
    """Table-style metric row for incident-level scores."""
    row = {
        "roc_auc": roc_auc(scores, labels),
        "pr_auc": pr_auc(scores, labels),
        "baseline_precision": baseline_precision(labels),
    }
    for r in recalls:
        row[f"precision_at_{round(r * 100)}"] = precision_at_recall(scores, labels, r)
    return row


def curve_csv(scores, labels) -> str:
    """ROC and P-R operating points, one row per distinct threshold."""
    c = metric_curve(scores, labels)
    lines = ["threshold,tp,fp,tn,fn,fpr,recall,precision"]
    for i in range(c.thresholds.size):
        lines.append(f"{c.thresholds[i]:.10g},{c.tp[i]},{c.fp[i]},{c.tn[i]},{c.fn[i]},"
                     f"{c.fpr[i]:.8f},{c.recall[i]:.8f},{c.precision[i]:.8f}")
    return "\n".join(lines) + "\n"
