"""Pairwise diversity between ensemble members' test-set predictions.

Every measure takes two probability arrays (N, K), or PredictionSets, and
averages a per-sample quantity over N.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Sequence, Union

import numpy as np

from app.core.errors import ShapeError
from app.services.metrics import PROBABILITY_FLOOR, PredictionSet

Predictions = Union[np.ndarray, PredictionSet]


class DiversityMeasure(str, Enum):
    CORR = "corr"
    DIS = "dis"
    KL = "kl"


def _rows(p: Predictions) -> np.ndarray:
    return np.asarray(p.probs if isinstance(p, PredictionSet) else p, dtype=np.float64)


def _pair(f1: Predictions, f2: Predictions):
    a, b = _rows(f1), _rows(f2)
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"Prediction shapes differ or are not (N, K): {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ShapeError("Diversity needs at least one sample")
    return a, b


def d_corr(f1: Predictions, f2: Predictions) -> float:
    """Mean per-sample Pearson correlation between the two K-dim output rows.

    A sample where either row is constant counts 1 when the rows are
    identical and 0 otherwise.
    """
    a, b = _pair(f1, f2)
    if a.shape[1] < 2:
        raise ShapeError("d_corr needs at least two classes")
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.sum(da * da, axis=1) * np.sum(db * db, axis=1))
    degenerate = norm == 0
    corr = np.empty(a.shape[0])
    corr[~degenerate] = np.sum(da * db, axis=1)[~degenerate] / norm[~degenerate]
    corr[degenerate] = np.all(a[degenerate] == b[degenerate], axis=1).astype(np.float64)
    return float(np.mean(np.clip(corr, -1.0, 1.0)))


def d_dis(f1: Predictions, f2: Predictions) -> float:
    """Fraction of samples whose argmax labels differ (lowest index wins ties)."""
    a, b = _pair(f1, f2)
    return float(np.mean(np.argmax(a, axis=1) != np.argmax(b, axis=1)))


def d_kl(f1: Predictions, f2: Predictions) -> float:
    """Mean row-wise KL(f1 || f2) with both rows floored at 1e-12 (not renormalized)."""
    a, b = _pair(f1, f2)
    a = np.maximum(a, PROBABILITY_FLOOR)
    b = np.maximum(b, PROBABILITY_FLOOR)
    # floored rows may sum slightly above 1; clamp per-sample round-off below 0
    per_sample = np.sum(a * (np.log(a) - np.log(b)), axis=1)
    return float(np.mean(np.maximum(per_sample, 0.0)))


MEASURES: Dict[DiversityMeasure, Callable[[Predictions, Predictions], float]] = {
    DiversityMeasure.CORR: d_corr,
    DiversityMeasure.DIS: d_dis,
    DiversityMeasure.KL: d_kl,
}


@dataclass(frozen=True)
class PairwiseResult:
    measure: DiversityMeasure
    matrix: np.ndarray
    mean: float


def pairwise_matrix(members: Sequence[Predictions], measure) -> PairwiseResult:
    """S x S matrix of the measure and its mean over ordered distinct pairs.

    For the symmetric measures the ordered mean equals the unordered one.
    """
    measure = DiversityMeasure(measure)
    if len(members) < 2:
        raise ShapeError(f"Pairwise diversity needs at least two members, got {len(members)}")
    fn = MEASURES[measure]
    size = len(members)
    matrix = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            if i == j:
                matrix[i, j] = fn(members[i], members[i])
            elif measure == DiversityMeasure.KL or j > i:
                matrix[i, j] = fn(members[i], members[j])
            else:
                matrix[i, j] = matrix[j, i]
    off_diagonal = ~np.eye(size, dtype=bool)
    return PairwiseResult(measure, matrix, float(matrix[off_diagonal].mean()))
