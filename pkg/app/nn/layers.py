import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar, Dict, List, Mapping, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.errors import ShapeError

Shape = Tuple[int, ...]


class LayerKind(str, Enum):
    CONV2D = "conv2d"
    MAXPOOL2D = "maxpool2d"
    RELU = "relu"
    FLATTEN = "flatten"
    LINEAR = "linear"


class ParameterRole(str, Enum):
    WEIGHT = "weight"
    BIAS = "bias"


@dataclass(frozen=True)
class LayerSpec:
    """One stage of a NetworkGraph.

    Layers hold no tensors: parameters live in the graph's ParameterStore
    under ``<layer name>.weight`` / ``<layer name>.bias``.
    """
    name: str
    kind: ClassVar[LayerKind]

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def parameter_shapes(self) -> List[Tuple[str, Shape, ParameterRole]]:
        return []

    def init_parameters(self, rng: np.random.Generator, dtype) -> Dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, params: Mapping[str, np.ndarray]) -> Tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(
        self,
        grad_out: np.ndarray,
        cache: Any,
        params: Mapping[str, np.ndarray],
        need_input_grad: bool = True,
    ) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "name": self.name}

    @property
    def weight_name(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.name}.bias"


def _he_uniform(rng: np.random.Generator, shape: Shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass(frozen=True)
class Conv2d(LayerSpec):
    """Valid (unpadded) stride-1 convolution, computed as im2col + matmul."""
    in_channels: int = 1
    out_channels: int = 1
    kernel_size: int = 5
    kind: ClassVar[LayerKind] = LayerKind.CONV2D

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ShapeError(
                f"{self.name}: expected input (C={self.in_channels}, H, W), got {tuple(input_shape)}"
            )
        _, h, w = input_shape
        k = self.kernel_size
        if h < k or w < k:
            raise ShapeError(f"{self.name}: input {h}x{w} smaller than kernel {k}x{k}")
        return (self.out_channels, h - k + 1, w - k + 1)

    def parameter_shapes(self) -> List[Tuple[str, Shape, ParameterRole]]:
        k = self.kernel_size
        return [
            (self.weight_name, (self.out_channels, self.in_channels, k, k), ParameterRole.WEIGHT),
            (self.bias_name, (self.out_channels,), ParameterRole.BIAS),
        ]

    def init_parameters(self, rng, dtype):
        fan_in = self.in_channels * self.kernel_size ** 2
        weight_shape = self.parameter_shapes()[0][1]
        return {
            self.weight_name: _he_uniform(rng, weight_shape, fan_in, dtype),
            self.bias_name: np.zeros(self.out_channels, dtype=dtype),
        }

    def forward(self, x, params):
        weight = params[self.weight_name]
        bias = params[self.bias_name]
        k = self.kernel_size
        windows = sliding_window_view(x, (k, k), axis=(2, 3))  # B, C, Ho, Wo, k, k
        batch, channels, out_h, out_w = windows.shape[:4]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * k * k)
        out = cols @ weight.reshape(self.out_channels, -1).T + bias
        out = out.reshape(batch, out_h, out_w, self.out_channels).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(out), (x.shape, cols)

    def backward(self, grad_out, cache, params, need_input_grad=True):
        x_shape, cols = cache
        weight = params[self.weight_name]
        k = self.kernel_size
        batch, channels = x_shape[:2]
        out_h, out_w = grad_out.shape[2:]
        g = grad_out.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        grads = {
            self.weight_name: (g.T @ cols).reshape(weight.shape),
            self.bias_name: g.sum(axis=0),
        }
        if not need_input_grad:
            return None, grads

        grad_cols = (g @ weight.reshape(self.out_channels, -1)).reshape(batch, out_h, out_w, channels, k, k)
        grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                grad_x[:, :, i:i + out_h, j:j + out_w] += grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return grad_x, grads

    def describe(self):
        return {**super().describe(), "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel_size": self.kernel_size}


@dataclass(frozen=True)
class MaxPool2d(LayerSpec):
    """2x2 window, stride 2; odd trailing rows/columns are dropped."""
    kind: ClassVar[LayerKind] = LayerKind.MAXPOOL2D

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[1] < 2 or input_shape[2] < 2:
            raise ShapeError(f"{self.name}: cannot pool input of shape {tuple(input_shape)}")
        c, h, w = input_shape
        return (c, h // 2, w // 2)

    def forward(self, x, params):
        batch, channels, h, w = x.shape
        out_h, out_w = h // 2, w // 2
        blocks = (
            x[:, :, :out_h * 2, :out_w * 2]
            .reshape(batch, channels, out_h, 2, out_w, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, out_h, out_w, 4)
        )
        # ties go to the first element of the window
        winner = blocks.argmax(axis=-1)
        out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]
        return out, (x.shape, winner)

    def backward(self, grad_out, cache, params, need_input_grad=True):
        x_shape, winner = cache
        batch, channels, out_h, out_w = grad_out.shape
        blocks = np.zeros((batch, channels, out_h, out_w, 4), dtype=grad_out.dtype)
        np.put_along_axis(blocks, winner[..., None], grad_out[..., None], axis=-1)
        grad_x = np.zeros(x_shape, dtype=grad_out.dtype)
        grad_x[:, :, :out_h * 2, :out_w * 2] = (
            blocks.reshape(batch, channels, out_h, out_w, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, out_h * 2, out_w * 2)
        )
        return grad_x, {}


@dataclass(frozen=True)
class ReLU(LayerSpec):
    kind: ClassVar[LayerKind] = LayerKind.RELU

    def forward(self, x, params):
        active = x > 0
        return np.where(active, x, x.dtype.type(0)), active

    def backward(self, grad_out, cache, params, need_input_grad=True):
        return np.where(cache, grad_out, grad_out.dtype.type(0)), {}


@dataclass(frozen=True)
class Flatten(LayerSpec):
    kind: ClassVar[LayerKind] = LayerKind.FLATTEN

    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache, params, need_input_grad=True):
        return grad_out.reshape(cache), {}


@dataclass(frozen=True)
class Linear(LayerSpec):
    """y = x W^T + b with W stored as (out_features, in_features)."""
    in_features: int = 1
    out_features: int = 1
    kind: ClassVar[LayerKind] = LayerKind.LINEAR

    def output_shape(self, input_shape: Shape) -> Shape:
        if tuple(input_shape) != (self.in_features,):
            raise ShapeError(
                f"{self.name}: expected input ({self.in_features},), got {tuple(input_shape)}"
            )
        return (self.out_features,)

    def parameter_shapes(self) -> List[Tuple[str, Shape, ParameterRole]]:
        return [
            (self.weight_name, (self.out_features, self.in_features), ParameterRole.WEIGHT),
            (self.bias_name, (self.out_features,), ParameterRole.BIAS),
        ]

    def init_parameters(self, rng, dtype):
        return {
            self.weight_name: _he_uniform(rng, (self.out_features, self.in_features), self.in_features, dtype),
            self.bias_name: np.zeros(self.out_features, dtype=dtype),
        }

    def forward(self, x, params):
        return x @ params[self.weight_name].T + params[self.bias_name], x

    def backward(self, grad_out, cache, params, need_input_grad=True):
        grads = {
            self.weight_name: grad_out.T @ cache,
            self.bias_name: grad_out.sum(axis=0),
        }
        grad_x = grad_out @ params[self.weight_name] if need_input_grad else None
        return grad_x, grads

    def describe(self):
        return {**super().describe(), "in_features": self.in_features, "out_features": self.out_features}


LAYER_TYPES = {
    LayerKind.CONV2D: Conv2d,
    LayerKind.MAXPOOL2D: MaxPool2d,
    LayerKind.RELU: ReLU,
    LayerKind.FLATTEN: Flatten,
    LayerKind.LINEAR: Linear,
}


def layer_from_description(description: Mapping[str, Any]) -> LayerSpec:
    """Rebuild a layer from ``LayerSpec.describe()`` output (used by checkpoints)."""
    attrs = dict(description)
    try:
        kind = LayerKind(attrs.pop("kind"))
    except (KeyError, ValueError) as e:
        raise ShapeError(f"Unknown layer description {description!r}") from e
    return LAYER_TYPES[kind](**attrs)
