from app.nn.functional import cross_entropy_loss, softmax
from app.nn.layers import Conv2d, Flatten, LayerKind, LayerSpec, Linear, MaxPool2d, ParameterRole, ReLU
from app.nn.network import (
    Gradients,
    NetworkGraph,
    ParameterEntry,
    ParameterStore,
    backward,
    forward,
    predict_proba,
)

__all__ = [
    "Conv2d", "Flatten", "Gradients", "LayerKind", "LayerSpec", "Linear", "MaxPool2d",
    "NetworkGraph", "ParameterEntry", "ParameterRole", "ParameterStore", "ReLU",
    "backward", "cross_entropy_loss", "forward", "predict_proba", "softmax",
]
