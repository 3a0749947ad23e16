"""Monotone score calibration via pool-adjacent-violators.

Successive models emit raw scores on different scales; a fitted isotonic map
turns them into probabilities that stay comparable across model versions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IsotonicMap:
    """Right-continuous non-decreasing step function on raw scores.

    ``values[i]`` applies to scores in [breakpoints[i], breakpoints[i+1]);
    scores below the first breakpoint get values[0].
    """

    breakpoints: np.ndarray  # ascending raw-score thresholds
    values: np.ndarray  # non-decreasing, in [0, 1]

    def apply(self, score: float) -> float:
        return float(self.apply_batch(np.asarray([score]))[0])

    def apply_batch(self, scores: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, scores, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> IsotonicMap:
        return cls(
            breakpoints=np.asarray(doc["breakpoints"], dtype=float),
            values=np.asarray(doc["values"], dtype=float),
        )


def _pav(means: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted pool-adjacent-violators: the non-decreasing least-squares fit."""
    # Blocks as (value, weight) pairs; merge while the tail decreases.
    values: list[float] = []
    wsum: list[float] = []
    sizes: list[int] = []
    for mean, weight in zip(means, weights):
        values.append(float(mean))
        wsum.append(float(weight))
        sizes.append(1)
        while len(values) > 1 and values[-2] >= values[-1]:
            v2, w2, n2 = values.pop(), wsum.pop(), sizes.pop()
            v1, w1, n1 = values.pop(), wsum.pop(), sizes.pop()
            w = w1 + w2
            values.append((v1 * w1 + v2 * w2) / w)
            wsum.append(w)
            sizes.append(n1 + n2)
    out = np.empty(len(means), dtype=float)
    pos = 0
    for value, size in zip(values, sizes):
        out[pos : pos + size] = value
        pos += size
    return out


def fit_isotonic(scores, labels) -> IsotonicMap:
    """Fit a calibration map from raw scores to observed label rates.

    Ties in the raw score are pre-averaged, so the map is a true function of
    the score. Labels may be 0/1 or -1/+1. A single-class input yields a
    constant map at the class rate.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    if len(scores) < 2:
        raise ValueError("isotonic fit needs at least 2 points")
    labels = np.where(labels > 0, 1.0, 0.0)

    if labels.min() == labels.max():
        rate = float(labels[0])
        return IsotonicMap(breakpoints=np.array([scores.min()]), values=np.array([rate]))

    order = np.argsort(scores, kind="stable")
    uniq, inverse = np.unique(scores[order], return_inverse=True)
    weights = np.bincount(inverse).astype(float)
    means = np.bincount(inverse, weights=labels[order]) / weights
    fitted = _pav(means, weights)
    return IsotonicMap(breakpoints=uniq, values=fitted)


def fitted_values(scores, labels) -> np.ndarray:
    """PAV solution evaluated back at the training points, in input order."""
    cal = fit_isotonic(scores, labels)
    return cal.apply_batch(np.asarray(scores, dtype=float))
