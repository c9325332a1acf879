from typing import Tuple

import numpy as np

from app.core.errors import ShapeError


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting the row maximum."""
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"Expected logits of shape (B, K), got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"Expected {logits.shape[0]} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeError(f"Labels must lie in [0, {logits.shape[1]}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.int64, copy=False)


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = np.asarray(logits)
    labels = _check_labels(logits, labels)
    picked = log_softmax(logits)[np.arange(logits.shape[0]), labels]
    return float(-picked.mean())


def cross_entropy_with_grad(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Loss and its gradient w.r.t. the logits: (softmax - onehot) / B."""
    logits = np.asarray(logits)
    labels = _check_labels(logits, labels)
    batch = logits.shape[0]
    log_probs = log_softmax(logits)
    loss = float(-log_probs[np.arange(batch), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(batch), labels] -= 1
    grad /= batch
    return loss, grad
