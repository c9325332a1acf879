import os

import numpy as np
import pytest

from app.domain.dataset import Dataset
from app.infra.datasets.synthetic import make_synthetic
from app.nn.layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU
from app.nn.network import NetworkGraph

DATA_DIR = os.environ.get("PAT_DATA_DIR", "./data")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale trend tests")


def pytest_collection_modifyitems(config, items):
    run_slow = config.getoption("--runslow")
    run_long = os.environ.get("PAT_LONGRUN") == "1"
    for item in items:
        if "slow" in item.keywords and not run_slow:
            item.add_marker(pytest.mark.skip(reason="needs --runslow"))
        if "longrun" in item.keywords and not run_long:
            item.add_marker(pytest.mark.skip(reason="needs PAT_LONGRUN=1"))


def tiny_layers():
    return [
        Conv2d("conv1", in_channels=1, out_channels=2, kernel_size=3),
        ReLU("relu1"),
        MaxPool2d("pool1"),
        Flatten("flatten"),
        Linear("fc1", in_features=18, out_features=5),
        ReLU("relu2"),
        Linear("fc2", in_features=5, out_features=3),
    ]


@pytest.fixture
def tiny_net():
    """1x8x8 input, one conv block, two linear layers, 3 classes."""
    return NetworkGraph.initialize(tiny_layers(), (1, 8, 8), seed=3)


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(11)
    return rng.standard_normal((4, 1, 8, 8)).astype(np.float32), np.array([0, 2, 1, 2])


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(5)
    images = rng.random((24, 1, 8, 8)).astype(np.float32)
    return Dataset(images, rng.integers(0, 3, size=24), 3, "train", "tiny")


@pytest.fixture(scope="session")
def synthetic_splits():
    return make_synthetic(n_train=200, n_test=100, num_classes=10, seed=0)
