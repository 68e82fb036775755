"""Binary detection metrics: thresholded accuracy, average precision, ROC-AUC."""

from __future__ import annotations

import numpy as np


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of [score >= threshold] == label; ties count as positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ValueError("accuracy of an empty score set is undefined")
    if scores.shape != labels.shape:
        raise ValueError("scores/labels shape mismatch")
    return float(np.mean((scores >= threshold).astype(int) == labels))


def average_precision(scores, labels) -> float:
    """Step-sum AP over the descending-score ranking.

    Stable sort with index-ascending tie-break; AP = sum over positive
    positions of (delta recall) * precision.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    tp = np.cumsum(ranked == 1)
    k = np.arange(1, len(ranked) + 1)
    precision = tp / k
    return float(np.sum(precision[ranked == 1]) / n_pos)


def roc_auc(scores, labels) -> float:
    """Rank-statistic AUC (Mann-Whitney, ties counted half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("roc_auc needs both classes")
    greater = (pos[:, None] > neg[None, :]).sum()
    equal = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * equal) / (len(pos) * len(neg)))
