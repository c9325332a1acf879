from enum import Enum
from typing import Tuple

import numpy as np

from app.core.errors import ConfigError
from app.nn.layers import Conv2d, Flatten, Linear, MaxPool2d, ReLU
from app.nn.network import NetworkGraph


class LeNetVariant(str, Enum):
    S = "lenet-s"
    M = "lenet-m"
    L = "lenet-l"

    @property
    def widths(self) -> Tuple[int, int, int, int]:
        """(conv1 filters, conv2 filters, fc1 units, fc2 units)"""
        return LENET_WIDTHS[self]

    @classmethod
    def parse(cls, value: str) -> "LeNetVariant":
        text = str(value).strip().lower()
        for variant in cls:
            if text in (variant.value, variant.name.lower()):
                return variant
        raise ConfigError(f"Unknown model variant {value!r}; expected one of lenet-s, lenet-m, lenet-l")


LENET_WIDTHS = {
    LeNetVariant.S: (16, 32, 256, 128),
    LeNetVariant.M: (32, 64, 512, 256),
    LeNetVariant.L: (64, 128, 1024, 512),
}

# published totals for 10 classes
LENET_PARAM_COUNTS = {
    LeNetVariant.S: 253_290,
    LeNetVariant.M: 1_007_306,
    LeNetVariant.L: 4_017_546,
}


def build_lenet(variant, num_classes: int = 10, seed: int = 0,
                input_shape: Tuple[int, int, int] = (3, 32, 32), dtype=np.float32) -> NetworkGraph:
    """conv-relu-pool x2, then three linear layers; 5x5 valid convs, 2x2 pools."""
    variant = variant if isinstance(variant, LeNetVariant) else LeNetVariant.parse(variant)
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    c1, c2, f1, f2 = variant.widths
    spatial = ((input_shape[1] - 4) // 2 - 4) // 2
    layers = [
        Conv2d("conv1", in_channels=input_shape[0], out_channels=c1, kernel_size=5),
        ReLU("relu1"),
        MaxPool2d("pool1"),
        Conv2d("conv2", in_channels=c1, out_channels=c2, kernel_size=5),
        ReLU("relu2"),
        MaxPool2d("pool2"),
        Flatten("flatten"),
        Linear("fc1", in_features=spatial * spatial * c2, out_features=f1),
        ReLU("relu3"),
        Linear("fc2", in_features=f1, out_features=f2),
        ReLU("relu4"),
        Linear("fc3", in_features=f2, out_features=num_classes),
    ]
    metadata = {"model": variant.value, "num_classes": num_classes}
    return NetworkGraph.initialize(layers, input_shape, seed=seed, dtype=dtype, metadata=metadata)


def param_count(net: NetworkGraph) -> int:
    return net.parameters.size
