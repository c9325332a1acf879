import logging
from typing import Tuple

from app.core.errors import ConfigError
from app.core.seeding import derive_seed
from app.domain.dataset import Dataset, take_subset
from app.domain.dtos.run_config import DatasetName, RunConfig
from app.infra.datasets.cifar import load_cifar10, load_cifar100
from app.infra.datasets.mnist import load_mnist
from app.infra.datasets.synthetic import make_synthetic

logger = logging.getLogger(__name__)


def load_datasets(config: RunConfig) -> Tuple[Dataset, Dataset]:
    """Train/test splits named by the config, cut to the configured subset sizes."""
    name = DatasetName(config.dataset)
    if name == DatasetName.CIFAR10:
        train, test = load_cifar10(config.data_dir)
    elif name == DatasetName.CIFAR100:
        train, test = load_cifar100(config.data_dir)
    elif name == DatasetName.MNIST:
        train, test = load_mnist(config.data_dir)
    elif name == DatasetName.SYNTHETIC:
        train, test = make_synthetic(config.train_subset or 512, config.test_subset or 256,
                                     config.num_classes or 10, seed=derive_seed(config.seed, "synthetic"))
    else:
        raise ConfigError(f"Unknown dataset {name}")
    train = take_subset(train, config.train_subset, derive_seed(config.seed, "train-subset"))
    test = take_subset(test, config.test_subset, derive_seed(config.seed, "test-subset"))
    if config.num_classes is not None and config.num_classes != train.num_classes:
        raise ConfigError(f"num_classes={config.num_classes} but {name.value} has {train.num_classes}")
    return train, test


__all__ = ["load_cifar10", "load_cifar100", "load_datasets", "load_mnist", "make_synthetic"]
