import logging
from dataclasses import dataclass

import numpy as np

from app.core.errors import ShapeError

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12
DEFAULT_BINS = 15


@dataclass(frozen=True)
class PredictionSet:
    """Probability rows (N, K) and true labels (N,)."""
    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs)
        labels = np.asarray(self.labels, dtype=np.int64)
        if probs.ndim != 2:
            raise ShapeError(f"Probabilities must be (N, K), got {probs.shape}")
        if labels.shape != (probs.shape[0],):
            raise ShapeError(f"{probs.shape[0]} probability rows but labels of shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
            raise ShapeError(f"Labels outside [0, {probs.shape[1]})")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def predictions(self) -> np.ndarray:
        """argmax per row; ties go to the lowest class index."""
        return np.argmax(self.probs, axis=1)

    @property
    def confidences(self) -> np.ndarray:
        return self.probs.max(axis=1)


@dataclass(frozen=True)
class MetricSummary:
    accuracy: float
    nll: float
    ece: float
    brier: float


def _require_samples(p: PredictionSet) -> None:
    if len(p) == 0:
        raise ShapeError("Metrics need at least one sample")


def accuracy(p: PredictionSet) -> float:
    _require_samples(p)
    return float(np.mean(p.predictions == p.labels))


def nll(p: PredictionSet) -> float:
    _require_samples(p)
    picked = p.probs[np.arange(len(p)), p.labels].astype(np.float64)
    return float(-np.mean(np.log(np.maximum(picked, PROBABILITY_FLOOR))))


def ece(p: PredictionSet, bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error over equal-width confidence bins.

    Bin b covers (b/bins, (b+1)/bins]; confidence 0 falls into the first bin.
    """
    if bins < 1:
        raise ShapeError(f"ECE needs at least one bin, got {bins}")
    _require_samples(p)
    confidence = p.confidences.astype(np.float64)
    correct = (p.predictions == p.labels).astype(np.float64)
    index = np.clip(np.ceil(confidence * bins).astype(np.int64) - 1, 0, bins - 1)
    counts = np.bincount(index, minlength=bins)
    acc_sum = np.bincount(index, weights=correct, minlength=bins)
    conf_sum = np.bincount(index, weights=confidence, minlength=bins)
    filled = counts > 0
    gaps = np.abs(acc_sum[filled] - conf_sum[filled]) / counts[filled]
    return float(np.sum(counts[filled] / len(p) * gaps))


def brier(p: PredictionSet) -> float:
    """Mean over samples of the squared distance to the one-hot label."""
    _require_samples(p)
    onehot = np.zeros_like(p.probs, dtype=np.float64)
    onehot[np.arange(len(p)), p.labels] = 1.0
    return float(np.mean(np.sum((p.probs.astype(np.float64) - onehot) ** 2, axis=1)))


def evaluate_predictions(p: PredictionSet, bins: int = DEFAULT_BINS) -> MetricSummary:
    return MetricSummary(accuracy(p), nll(p), ece(p, bins), brier(p))
