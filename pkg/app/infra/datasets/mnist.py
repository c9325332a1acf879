"""IDX readers for MNIST, padded to 3x32x32 so the LeNet stack applies unchanged."""
import gzip
import logging
from pathlib import Path
from typing import Tuple

import numpy as np

from app.core.errors import DataIOError
from app.domain.dataset import Dataset

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _read_bytes(path: Path) -> bytes:
    for candidate in (path, path.with_name(path.name + ".gz")):
        if candidate.is_file():
            if candidate.suffix == ".gz":
                with gzip.open(candidate, "rb") as f:
                    return f.read()
            return candidate.read_bytes()
    raise DataIOError(f"{path}: file not found (plain or .gz)")


def read_idx_images(path) -> np.ndarray:
    raw = _read_bytes(Path(path))
    if len(raw) < 16:
        raise DataIOError(f"{path}: {len(raw)} bytes, shorter than the 16-byte IDX header")
    magic, count, rows, cols = (int(v) for v in np.frombuffer(raw[:16], dtype=">i4"))
    if magic != IMAGE_MAGIC:
        raise DataIOError(f"{path}: bad magic {magic}, expected {IMAGE_MAGIC}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise DataIOError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(Path(path))
    if len(raw) < 8:
        raise DataIOError(f"{path}: {len(raw)} bytes, shorter than the 8-byte IDX header")
    magic, count = (int(v) for v in np.frombuffer(raw[:8], dtype=">i4"))
    if magic != LABEL_MAGIC:
        raise DataIOError(f"{path}: bad magic {magic}, expected {LABEL_MAGIC}")
    if len(raw) != 8 + count:
        raise DataIOError(f"{path}: expected {8 + count} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def pad_to_lenet(images: np.ndarray, size: int = 32, channels: int = 3) -> np.ndarray:
    """Zero-pad (N, 28, 28) grey images to (N, channels, size, size) floats in [0, 1]."""
    rows, cols = images.shape[1:]
    top, left = (size - rows) // 2, (size - cols) // 2
    padded = np.pad(images, ((0, 0), (top, size - rows - top), (left, size - cols - left)))
    unit = padded.astype(np.float32) / np.float32(255.0)
    return np.repeat(unit[:, None], channels, axis=1)


def load_mnist(directory) -> Tuple[Dataset, Dataset]:
    directory = Path(directory)
    splits = {}
    for split, (image_file, label_file) in FILES.items():
        images = read_idx_images(directory / image_file)
        labels = read_idx_labels(directory / label_file)
        if len(images) != len(labels):
            raise DataIOError(f"{directory}: {len(images)} {split} images but {len(labels)} labels")
        splits[split] = Dataset(pad_to_lenet(images), labels, 10, split, "mnist")
    logger.info(f"Loaded MNIST from {directory}")
    return splits["train"], splits["test"]
