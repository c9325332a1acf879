from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.domain.dataset import Dataset


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class AugmentPolicy:
    crop_pad: int = 0
    hflip: bool = False
    stats: Optional[ChannelStats] = None

    @property
    def is_identity(self) -> bool:
        return not self.crop_pad and not self.hflip and self.stats is None


def compute_channel_stats(dataset: Dataset) -> ChannelStats:
    """Per-channel mean and std over the whole split, in float64."""
    images = dataset.images.astype(np.float64)
    std = images.std(axis=(0, 2, 3))
    return ChannelStats(images.mean(axis=(0, 2, 3)), np.where(std > 0, std, 1.0))


def normalize(batch: np.ndarray, stats: ChannelStats) -> np.ndarray:
    mean = stats.mean[:, None, None]
    std = stats.std[:, None, None]
    return ((batch - mean) / std).astype(np.float32)


def normalize_dataset(dataset: Dataset, stats: ChannelStats) -> Dataset:
    return dataset.with_images(normalize(dataset.images, stats))


def random_crop(batch: np.ndarray, rng: np.random.Generator, pad: int) -> np.ndarray:
    """Zero-pad by ``pad`` pixels on each side and cut a random HxW window per sample."""
    height, width = batch.shape[2:]
    padded = np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (height, width), axis=(2, 3))
    offsets = rng.integers(0, 2 * pad + 1, size=(len(batch), 2))
    return np.ascontiguousarray(windows[np.arange(len(batch)), :, offsets[:, 0], offsets[:, 1]])


def horizontal_flip(batch: np.ndarray, decisions: np.ndarray) -> np.ndarray:
    out = batch.copy()
    out[decisions] = batch[decisions][..., ::-1]
    return out


def augment(batch: np.ndarray, seed: int, policy: AugmentPolicy) -> np.ndarray:
    """Seeded crop, flip (p=0.5) and normalization, in that order."""
    if policy.is_identity:
        return batch
    rng = np.random.default_rng(seed)
    out = batch
    if policy.crop_pad:
        out = random_crop(out, rng, policy.crop_pad)
    if policy.hflip:
        out = horizontal_flip(out, rng.random(len(out)) < 0.5)
    if policy.stats is not None:
        out = normalize(out, policy.stats)
    return out
