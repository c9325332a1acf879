from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.core.errors import ConfigError, ShapeError
from app.domain.masks import exact_floor


@dataclass(frozen=True)
class Dataset:
    """Images (N, C, H, W) as float32 plus integer labels in [0, num_classes)."""
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    name: str = ""

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if self.images.ndim != 4:
            raise ShapeError(f"Dataset images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(labels):
            raise ShapeError(f"{len(self.images)} images but {len(labels)} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ShapeError(f"Labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray, split: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes,
                       split or self.split, self.name)

    def with_images(self, images: np.ndarray) -> "Dataset":
        return Dataset(images, self.labels, self.num_classes, self.split, self.name)


def take_subset(dataset: Dataset, size: int, seed: int) -> Dataset:
    """Seeded fixed-size subset kept in original order; 0 or >= N keeps everything."""
    if size <= 0 or size >= len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    return dataset.subset(np.sort(rng.permutation(len(dataset))[:size]))


def bootstrap_subset(dataset: Dataset, fraction: float, seed: int, replace: bool = False) -> Dataset:
    """floor(f * N) samples; distinct indices unless ``replace`` is set."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"Bagging fraction must lie in (0, 1], got {fraction}")
    size = exact_floor(fraction * len(dataset))
    if size == 0:
        raise ConfigError(f"Bagging fraction {fraction} leaves no samples out of {len(dataset)}")
    rng = np.random.default_rng(seed)
    if replace:
        indices = rng.integers(0, len(dataset), size=size)
    else:
        indices = rng.permutation(len(dataset))[:size]
    return dataset.subset(indices)
