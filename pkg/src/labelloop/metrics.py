"""Ranking and threshold metrics: AUC, precision/recall sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class OneClassError(ValueError):
    """AUC is undefined when only one class is present."""


def auc(scores, labels) -> float:
    """Concordant-pair fraction with ties counted one half.

    Computed via the rank statistic, which is exactly the pairwise count:
    U = R_pos - n_pos(n_pos+1)/2.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks on ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float


def pr_curve(scores, labels) -> list[PrPoint]:
    """Precision/recall at every distinct score threshold (predict >= t)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = (labels > 0).astype(np.int64)
    total_pos = int(pos.sum())
    if total_pos == 0:
        return []
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(pos[order])
    predicted = np.arange(1, len(scores) + 1)
    # Last index of each run of equal scores = the threshold's full cohort.
    last_of_run = np.nonzero(np.diff(sorted_scores, append=-np.inf) != 0)[0]
    points = []
    for i in last_of_run:
        points.append(
            PrPoint(
                threshold=float(sorted_scores[i]),
                precision=float(tp[i] / predicted[i]),
                recall=float(tp[i] / total_pos),
            )
        )
    return points


def recall_at_precision(scores, labels, min_precision: float) -> float:
    """Max recall over thresholds whose precision is at least min_precision."""
    best = 0.0
    for point in pr_curve(scores, labels):
        if point.precision >= min_precision and point.recall > best:
            best = point.recall
    return best


@dataclass
class Evaluation:
    auc: float | None
    curve: list[PrPoint]
    positives: int
    negatives: int

    def recall_at_precision(self, min_precision: float) -> float:
        best = 0.0
        for point in self.curve:
            if point.precision >= min_precision and point.recall > best:
                best = point.recall
        return best

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "positives": self.positives,
            "negatives": self.negatives,
            "recall_at_p80": self.recall_at_precision(0.8),
        }


def evaluate(scores, labels, strict: bool = False) -> Evaluation:
    """Full evaluation; AUC is None on one-class input unless strict."""
    labels = np.asarray(labels)
    n_pos = int((labels > 0).sum())
    n_neg = len(labels) - n_pos
    try:
        area = auc(scores, labels)
    except OneClassError:
        if strict:
            raise
        area = None
    return Evaluation(auc=area, curve=pr_curve(scores, labels), positives=n_pos, negatives=n_neg)
