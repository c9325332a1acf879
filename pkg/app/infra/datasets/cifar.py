"""Binary CIFAR readers.

CIFAR-10 records are 1 label byte + 3072 pixel bytes (channel-major 32x32);
CIFAR-100 records carry a coarse and a fine label byte before the pixels.
"""
import logging
from pathlib import Path
from typing import Tuple

import numpy as np

from app.core.errors import DataIOError
from app.domain.dataset import Dataset

logger = logging.getLogger(__name__)

PIXELS = 3 * 32 * 32
CIFAR10_RECORD = 1 + PIXELS
CIFAR100_RECORD = 2 + PIXELS
CIFAR10_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_FILE = "test_batch.bin"
RECORDS_PER_BATCH = 10000


def read_cifar_records(path: Path, record_size: int = CIFAR10_RECORD, label_offset: int = 0,
                       expected_records: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Raw uint8 images (N, 3, 32, 32) and int64 labels from one binary file."""
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"{path}: file not found")
    raw = path.read_bytes()
    if expected_records and len(raw) != expected_records * record_size:
        raise DataIOError(
            f"{path}: expected {expected_records * record_size} bytes "
            f"({expected_records} records of {record_size}), found {len(raw)}"
        )
    if not raw or len(raw) % record_size:
        raise DataIOError(f"{path}: {len(raw)} bytes is not a whole number of {record_size}-byte records")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record_size)
    labels = data[:, label_offset].astype(np.int64)
    images = data[:, record_size - PIXELS:].reshape(-1, 3, 32, 32)
    return images, labels


def to_unit_float(images: np.ndarray) -> np.ndarray:
    return images.astype(np.float32) / np.float32(255.0)


def _resolve(directory: Path, nested: str) -> Path:
    directory = Path(directory)
    if (directory / nested).is_dir():
        return directory / nested
    return directory


def load_cifar10(directory) -> Tuple[Dataset, Dataset]:
    directory = _resolve(directory, "cifar-10-batches-bin")
    parts = [read_cifar_records(directory / name, expected_records=RECORDS_PER_BATCH)
             for name in CIFAR10_TRAIN_FILES]
    test_images, test_labels = read_cifar_records(directory / CIFAR10_TEST_FILE,
                                                  expected_records=RECORDS_PER_BATCH)
    train = Dataset(to_unit_float(np.concatenate([p[0] for p in parts])),
                    np.concatenate([p[1] for p in parts]), 10, "train", "cifar10")
    test = Dataset(to_unit_float(test_images), test_labels, 10, "test", "cifar10")
    logger.info(f"Loaded CIFAR-10 from {directory}: {len(train)} train / {len(test)} test")
    return train, test


def load_cifar100(directory) -> Tuple[Dataset, Dataset]:
    """Fine (100-class) labels."""
    directory = _resolve(directory, "cifar-100-binary")
    splits = {}
    for split, name, count in (("train", "train.bin", 50000), ("test", "test.bin", 10000)):
        images, labels = read_cifar_records(directory / name, CIFAR100_RECORD, label_offset=1,
                                            expected_records=count)
        splits[split] = Dataset(to_unit_float(images), labels, 100, split, "cifar100")
    logger.info(f"Loaded CIFAR-100 from {directory}")
    return splits["train"], splits["test"]
