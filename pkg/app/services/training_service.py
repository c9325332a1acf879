import logging
import math
import sys
import time
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from app.core.config import settings
from app.core.errors import ConfigError, NumericError
from app.core.seeding import derive_seed
from app.domain.dataset import Dataset
from app.domain.dtos.report import EpochRecord, TrainingLog
from app.nn.network import NetworkGraph, backward, predict_proba
from app.services.augmentation import AugmentPolicy, augment
from app.services.metrics import PredictionSet, accuracy
from app.services.schedules import Schedule

logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, NetworkGraph], None]


def _check_finite(net: NetworkGraph, where: str) -> None:
    for entry in net.parameters:
        if not np.all(np.isfinite(entry.tensor)):
            raise NumericError(f"Non-finite values in {entry.name} {where}")


def train_epochs(
    net: NetworkGraph,
    dataset: Dataset,
    epochs: int,
    optimizer,
    schedule: Schedule,
    seed: int,
    batch_size: int = 128,
    policy: Optional[AugmentPolicy] = None,
    eval_set: Optional[Dataset] = None,
    on_epoch_end: Optional[EpochCallback] = None,
    desc: str = "train",
) -> TrainingLog:
    """Shuffled mini-batch training of ``net`` in place.

    The learning rate is looked up per batch from ``schedule`` with t counted
    over the whole run. The net's mask (if any) is enforced on every step.
    """
    if len(dataset) == 0:
        raise ConfigError("Cannot train on an empty dataset")
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")

    steps_per_epoch = math.ceil(len(dataset) / batch_size)
    total_steps = epochs * steps_per_epoch
    rng = np.random.default_rng(seed)
    keep = net.keep_arrays()
    log = TrainingLog()
    step = 0
    lr = schedule.lr_at(0, total_steps)

    progress = tqdm(range(epochs), desc=desc, disable=not sys.stderr.isatty(), leave=False)
    for epoch in progress:
        started = time.perf_counter()
        order = rng.permutation(len(dataset))
        loss_sum = 0.0
        correct = 0
        for b in range(steps_per_epoch):
            index = order[b * batch_size:(b + 1) * batch_size]
            images = dataset.images[index]
            labels = dataset.labels[index]
            if policy is not None and not policy.is_identity:
                images = augment(images, derive_seed(seed, "augment", epoch, b), policy)
            lr = schedule.lr_at(step, total_steps)
            loss, grads, logits = backward(net, images, labels, return_logits=True)
            if not math.isfinite(loss):
                raise NumericError(f"{desc}: non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            optimizer.step(net.parameters, grads, lr, keep)
            loss_sum += loss * len(index)
            correct += int(np.sum(np.argmax(logits, axis=1) == labels))
            step += 1
            logger.debug(f"{desc} epoch {epoch + 1} batch {b + 1}/{steps_per_epoch} loss={loss:.4f} lr={lr:.3g}")

        _check_finite(net, f"after {desc} epoch {epoch + 1}")
        record = EpochRecord(
            epoch=epoch + 1,
            train_loss=loss_sum / len(dataset),
            train_accuracy=correct / len(dataset),
            lr=lr,
            wall_time=time.perf_counter() - started,
        )
        if eval_set is not None and len(eval_set):
            probs = predict_proba(net, eval_set.images, settings.EVAL_BATCH_SIZE)
            record.test_accuracy = accuracy(PredictionSet(probs, eval_set.labels))
        log.epochs.append(record)
        log.samples_seen += len(dataset)
        logger.info(
            f"{desc} epoch {record.epoch}/{epochs} loss={record.train_loss:.4f} "
            f"train_acc={record.train_accuracy:.4f}"
            + (f" test_acc={record.test_accuracy:.4f}" if record.test_accuracy is not None else "")
        )
        if on_epoch_end is not None:
            on_epoch_end(epoch + 1, net)

    log.steps = step
    log.last_lr = lr
    return log


def evaluate_loss(net: NetworkGraph, dataset: Dataset) -> float:
    """Mean cross-entropy over a dataset (no update)."""
    probs = predict_proba(net, dataset.images, settings.EVAL_BATCH_SIZE).astype(np.float64)
    picked = probs[np.arange(len(dataset)), dataset.labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-12))))
