"""Model training: L2-regularized logistic regression and trainer families.

A family is a grid of regularization strengths; the winner is picked by
stratified cross-validated AUC (ties go to the strongest regularizer) and
refit on the full set. Calibration data comes from the winner's out-of-fold
predictions, never from training-set predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize
import scipy.sparse as sp
from scipy.special import expit

from .calibration import IsotonicMap, fit_isotonic
from .hashing import stable_hash
from .metrics import auc

DEFAULT_REG_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_FOLDS = 5

GRAD_TOL = 1e-6
MAX_ITER = 500


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingSet:
    """Labeled examples over a fixed sparse feature space."""

    row_ids: np.ndarray  # int64
    features: sp.csr_matrix
    labels: np.ndarray  # +1 / -1
    dim: int

    @classmethod
    def from_rows(cls, rows: list[tuple[int, dict[int, float], int]], dim: int) -> TrainingSet:
        seen = set()
        for row_id, _, _ in rows:
            if row_id in seen:
                raise TrainingError(f"duplicate row {row_id} in training set")
            seen.add(row_id)
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        labels = np.empty(len(rows), dtype=np.int64)
        row_ids = np.empty(len(rows), dtype=np.int64)
        for i, (row_id, vec, label) in enumerate(rows):
            for fid in sorted(vec):
                indices.append(fid)
                data.append(vec[fid])
            indptr.append(len(indices))
            labels[i] = 1 if label > 0 else -1
            row_ids[i] = row_id
        matrix = sp.csr_matrix(
            (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), indptr),
            shape=(len(rows), dim),
        )
        return cls(row_ids=row_ids, features=matrix, labels=labels, dim=dim)

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> tuple[int, int]:
        n_pos = int((self.labels > 0).sum())
        return n_pos, len(self.labels) - n_pos

    def subset(self, mask: np.ndarray) -> TrainingSet:
        return TrainingSet(
            row_ids=self.row_ids[mask],
            features=self.features[mask],
            labels=self.labels[mask],
            dim=self.dim,
        )


@dataclass
class LinearModel:
    """Sparse linear classifier with optional isotonic calibration."""

    weights: np.ndarray
    bias: float
    reg_strength: float
    version: int = 0
    calibrator: IsotonicMap | None = None

    def raw_scores(self, features: sp.spmatrix | np.ndarray) -> np.ndarray:
        z = features @ self.weights + self.bias
        return expit(np.asarray(z).ravel())

    def raw_score_vec(self, vec: dict[int, float]) -> float:
        z = self.bias
        n = len(self.weights)
        for fid, value in vec.items():
            if fid < n:
                z += self.weights[fid] * value
        return float(expit(z))

    def predict_batch(self, features: sp.spmatrix | np.ndarray) -> np.ndarray:
        p = self.raw_scores(features)
        if self.calibrator is not None:
            p = self.calibrator.apply_batch(p)
        return p

    def predict_vec(self, vec: dict[int, float]) -> float:
        p = self.raw_score_vec(vec)
        if self.calibrator is not None:
            p = self.calibrator.apply(p)
        return float(p)

    def with_version(self, version: int) -> LinearModel:
        return replace(self, version=version)


def loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    features: sp.spmatrix,
    labels: np.ndarray,
    reg_strength: float,
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus (reg/2)*||w||^2; the bias is not penalized.

    Returns (loss, grad_w, grad_b), all exact up to float rounding.
    """
    if not np.isfinite(features.data if sp.issparse(features) else features).all():
        raise TrainingError("non-finite feature values")
    n = len(labels)
    z = np.asarray(features @ weights).ravel() + bias
    margins = labels * z
    loss = float(np.logaddexp(0.0, -margins).mean())
    loss += 0.5 * reg_strength * float(weights @ weights)
    # d/dz of log(1+exp(-y z)) = -y * sigmoid(-y z)
    coef = -labels * expit(-margins) / n
    grad_w = np.asarray(features.T @ coef).ravel() + reg_strength * weights
    grad_b = float(coef.sum())
    return loss, grad_w, grad_b


def fit(train: TrainingSet, reg_strength: float) -> LinearModel:
    """Deterministic fit from zero initialization (L-BFGS, max-norm grad tol)."""
    n_pos, n_neg = train.class_counts()
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("training needs both classes present")

    dim = train.dim

    def objective(packed: np.ndarray) -> tuple[float, np.ndarray]:
        loss, grad_w, grad_b = loss_and_gradient(
            packed[:dim], packed[dim], train.features, train.labels, reg_strength
        )
        return loss, np.concatenate([grad_w, [grad_b]])

    result = scipy.optimize.minimize(
        objective,
        np.zeros(dim + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": MAX_ITER, "gtol": GRAD_TOL, "ftol": 0.0},
    )
    if not np.isfinite(result.fun) or not np.isfinite(result.x).all():
        raise TrainingError(f"fit diverged: loss={result.fun!r}")
    return LinearModel(
        weights=result.x[:dim], bias=float(result.x[dim]), reg_strength=reg_strength
    )


@dataclass(frozen=True)
class TrainerFamily:
    reg_grid: tuple[float, ...] = DEFAULT_REG_GRID
    folds: int = DEFAULT_FOLDS

    def __post_init__(self):
        if not self.reg_grid:
            raise ValueError("empty regularization grid")
        if self.folds < 2:
            raise ValueError("fold count must be >= 2")


def fold_assignments(row_ids: np.ndarray, labels: np.ndarray, folds: int, salt: int) -> np.ndarray:
    """Stratified fold ids: rows ordered by stable hash within each class,
    dealt round-robin so folds are balanced per class and deterministic."""
    out = np.empty(len(row_ids), dtype=np.int64)
    for cls in (1, -1):
        idx = np.nonzero(labels == cls)[0]
        keys = np.asarray([stable_hash(int(row_ids[i]), salt) for i in idx])
        ordered = idx[np.argsort(keys, kind="stable")]
        for pos, i in enumerate(ordered):
            out[i] = pos % folds
    return out


@dataclass
class CvReport:
    grid: tuple[float, ...]
    folds: int
    fold_aucs: dict[float, list[float]] = field(default_factory=dict)
    mean_aucs: dict[float, float] = field(default_factory=dict)
    selected: float = 0.0
    flagged: str = ""  # non-empty when CV was degraded or skipped

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "folds": self.folds,
            "mean_aucs": {str(k): v for k, v in self.mean_aucs.items()},
            "selected": self.selected,
            "flagged": self.flagged,
        }


def select_by_mean_auc(mean_aucs: dict[float, float]) -> float:
    """Highest mean AUC; exact ties resolve to the largest reg_strength."""
    best = max(mean_aucs.values())
    return max(reg for reg, value in mean_aucs.items() if value == best)


def train_family(
    train: TrainingSet,
    family: TrainerFamily,
    salt: int = 0,
    calibrate: bool = True,
) -> tuple[LinearModel, CvReport]:
    """Cross-validate the grid, refit the winner, calibrate on OOF predictions."""
    n_pos, n_neg = train.class_counts()
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("family training needs both classes present")

    folds = family.folds
    flagged = ""
    if min(n_pos, n_neg) < folds:
        folds = 2
        flagged = f"fold count reduced to 2 (class counts {n_pos}/{n_neg})"
    if min(n_pos, n_neg) < 2:
        reg = max(family.reg_grid)
        model = fit(train, reg)
        report = CvReport(
            grid=family.reg_grid,
            folds=0,
            selected=reg,
            flagged="trained without CV at largest reg_strength "
            f"(class counts {n_pos}/{n_neg})",
        )
        return model, report

    assignment = fold_assignments(train.row_ids, train.labels, folds, salt)
    report = CvReport(grid=family.reg_grid, folds=folds, flagged=flagged)
    oof: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    for reg in family.reg_grid:
        fold_scores: list[float] = []
        preds = np.empty(len(train), dtype=float)
        for k in range(folds):
            val = assignment == k
            model_k = fit(train.subset(~val), reg)
            p = model_k.raw_scores(train.features[val])
            preds[val] = p
            fold_scores.append(auc(p, train.labels[val]))
        report.fold_aucs[reg] = fold_scores
        report.mean_aucs[reg] = float(sum(fold_scores) / folds)
        oof[reg] = (preds, train.labels.copy())

    selected = select_by_mean_auc(report.mean_aucs)
    report.selected = selected
    model = fit(train, selected)
    if calibrate:
        preds, labels = oof[selected]
        model.calibrator = fit_isotonic(preds, labels)
    return model, report
