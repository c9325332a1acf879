import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ShapeError
from app.nn.functional import cross_entropy_with_grad, softmax
from app.nn.layers import LayerSpec, ParameterRole, Shape, layer_from_description

if TYPE_CHECKING:
    from app.domain.masks import PruneMask

logger = logging.getLogger(__name__)


@dataclass
class ParameterEntry:
    name: str
    tensor: np.ndarray
    role: ParameterRole
    layer: str


class ParameterStore:
    """Ordered named parameters with a canonical flat index.

    Entry order is layer order, weight before bias; within an entry the
    flattening is row-major. Global index i therefore depends only on the
    graph structure.
    """

    def __init__(self, entries: Sequence[ParameterEntry]):
        self._entries: List[ParameterEntry] = list(entries)
        self._position = {entry.name: i for i, entry in enumerate(self._entries)}
        if len(self._position) != len(self._entries):
            raise ShapeError("Duplicate parameter names in store")
        offsets = np.cumsum([0] + [entry.tensor.size for entry in self._entries])
        self._offsets = {entry.name: int(offsets[i]) for i, entry in enumerate(self._entries)}
        self._size = int(offsets[-1])

    @property
    def entries(self) -> List[ParameterEntry]:
        return self._entries

    @property
    def names(self) -> List[str]:
        return [entry.name for entry in self._entries]

    @property
    def size(self) -> int:
        return self._size

    @property
    def dtype(self):
        return self._entries[0].tensor.dtype if self._entries else np.dtype(np.float32)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[ParameterEntry]:
        return iter(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._position

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[self._position[name]].tensor

    def entry(self, name: str) -> ParameterEntry:
        return self._entries[self._position[name]]

    def offset(self, name: str) -> int:
        return self._offsets[name]

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {entry.name: entry.tensor for entry in self._entries}

    def layout(self) -> Tuple[Tuple[str, Shape, str], ...]:
        return tuple((e.name, tuple(e.tensor.shape), e.role.value) for e in self._entries)

    def flatten(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate([entry.tensor.ravel() for entry in self._entries])

    def assign_flat(self, values: np.ndarray) -> None:
        if values.shape != (self._size,):
            raise ShapeError(f"Flat vector of length {values.shape} does not match store size {self._size}")
        for entry in self._entries:
            start = self._offsets[entry.name]
            entry.tensor[...] = values[start:start + entry.tensor.size].reshape(entry.tensor.shape)

    def copy(self) -> "ParameterStore":
        return ParameterStore(
            [ParameterEntry(e.name, e.tensor.copy(), e.role, e.layer) for e in self._entries]
        )

    def astype(self, dtype) -> "ParameterStore":
        return ParameterStore(
            [ParameterEntry(e.name, e.tensor.astype(dtype), e.role, e.layer) for e in self._entries]
        )


class Gradients:
    """One gradient array per ParameterStore entry, same names and shapes."""

    def __init__(self, arrays: Mapping[str, np.ndarray], layout: Tuple[Tuple[str, Shape, str], ...]):
        self._arrays = dict(arrays)
        self._layout = layout

    @classmethod
    def zeros_like(cls, store: ParameterStore) -> "Gradients":
        return cls({e.name: np.zeros_like(e.tensor) for e in store}, store.layout())

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self._arrays[name] = value

    def items(self):
        return [(name, self._arrays[name]) for name, _, _ in self._layout]

    def mirrors(self, store: ParameterStore) -> bool:
        return self._layout == store.layout() and all(
            self._arrays[name].shape == shape for name, shape, _ in self._layout
        )

    def flatten(self) -> np.ndarray:
        return np.concatenate([self._arrays[name].ravel() for name, _, _ in self._layout])


class NetworkGraph:
    """Layer sequence plus its parameters and an optional pruning mask.

    The graph is not mutated by forward/backward; optimizers update the
    store's arrays in place.
    """

    def __init__(
        self,
        layers: Sequence[LayerSpec],
        parameters: ParameterStore,
        input_shape: Shape,
        mask: Optional["PruneMask"] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ):
        self.layers: Tuple[LayerSpec, ...] = tuple(layers)
        self.parameters = parameters
        self.input_shape: Shape = tuple(int(d) for d in input_shape)
        self.metadata: Dict[str, Any] = dict(metadata or {})
        self.shapes: List[Shape] = self._compose_shapes()
        self._check_parameters()
        self._mask = None
        self._keep: Optional[Dict[str, np.ndarray]] = None
        if mask is not None:
            self.mask = mask

    def _compose_shapes(self) -> List[Shape]:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    def _check_parameters(self) -> None:
        expected = [
            (name, tuple(shape), role.value)
            for layer in self.layers
            for name, shape, role in layer.parameter_shapes()
        ]
        if list(self.parameters.layout()) != expected:
            raise ShapeError("Parameter store does not match the layer sequence")

    @classmethod
    def initialize(
        cls,
        layers: Sequence[LayerSpec],
        input_shape: Shape,
        seed: int = 0,
        dtype=np.float32,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> "NetworkGraph":
        """Fan-in scaled uniform weights, zero biases, from one seeded stream."""
        rng = np.random.default_rng(seed)
        entries = []
        for layer in layers:
            values = layer.init_parameters(rng, dtype)
            for name, _, role in layer.parameter_shapes():
                entries.append(ParameterEntry(name, values[name], role, layer.name))
        return cls(layers, ParameterStore(entries), input_shape, metadata=metadata)

    @property
    def output_shape(self) -> Shape:
        return self.shapes[-1]

    @property
    def mask(self) -> Optional["PruneMask"]:
        return self._mask

    @mask.setter
    def mask(self, mask: Optional["PruneMask"]) -> None:
        self._mask = mask
        self._keep = None

    def keep_arrays(self) -> Dict[str, np.ndarray]:
        """Per-entry 0/1 arrays for entries the mask touches; empty when unmasked."""
        if self._mask is None:
            return {}
        if self._keep is None:
            self._keep = self._mask.keep_arrays(self.parameters)
        return self._keep

    def copy(self) -> "NetworkGraph":
        return NetworkGraph(self.layers, self.parameters.copy(), self.input_shape, self._mask, self.metadata)

    def astype(self, dtype) -> "NetworkGraph":
        return NetworkGraph(self.layers, self.parameters.astype(dtype), self.input_shape, self._mask, self.metadata)

    def with_parameters(self, parameters: ParameterStore) -> "NetworkGraph":
        return NetworkGraph(self.layers, parameters, self.input_shape, self._mask, self.metadata)

    def describe(self) -> Dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer.describe() for layer in self.layers],
            "metadata": self.metadata,
        }

    @classmethod
    def from_description(cls, description: Mapping[str, Any], parameters: ParameterStore) -> "NetworkGraph":
        layers = [layer_from_description(d) for d in description["layers"]]
        return cls(layers, parameters, tuple(description["input_shape"]), metadata=description.get("metadata"))

    def forward(self, batch: np.ndarray) -> np.ndarray:
        return forward(self, batch)


def prepare_batch(net: NetworkGraph, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != len(net.input_shape) + 1 or tuple(batch.shape[1:]) != net.input_shape:
        raise ShapeError(f"Batch shape {batch.shape} does not match network input (B, {', '.join(map(str, net.input_shape))})")
    if batch.shape[0] < 1:
        raise ShapeError("Batch must contain at least one sample")
    return batch.astype(net.parameters.dtype, copy=False)


def forward(net: NetworkGraph, batch: np.ndarray) -> np.ndarray:
    """Logits for a batch; pure function of inputs and parameters."""
    x = prepare_batch(net, batch)
    params = net.parameters.as_dict()
    for layer in net.layers:
        x, _ = layer.forward(x, params)
    return x


def backward(net: NetworkGraph, batch: np.ndarray, labels: np.ndarray, return_logits: bool = False):
    """Mean cross-entropy and its exact gradient w.r.t. every parameter.

    Masked entries are zeroed here so a masked child never sees a gradient
    at a pruned position.
    """
    x = prepare_batch(net, batch)
    params = net.parameters.as_dict()
    caches = []
    for layer in net.layers:
        x, cache = layer.forward(x, params)
        caches.append(cache)

    logits = x
    loss, grad = cross_entropy_with_grad(logits, labels)
    grads = Gradients.zeros_like(net.parameters)
    first_with_params = next(
        (i for i, layer in enumerate(net.layers) if layer.parameter_shapes()), len(net.layers)
    )
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        grad, layer_grads = layer.backward(grad, caches[i], params, need_input_grad=i > first_with_params)
        for name, value in layer_grads.items():
            grads[name] = value
        if grad is None:
            break

    for name, keep in net.keep_arrays().items():
        grads[name] = grads[name] * keep
    if return_logits:
        return loss, grads, logits
    return loss, grads


def predict_proba(net: NetworkGraph, images: np.ndarray, batch_size: int = 500) -> np.ndarray:
    """Softmax probabilities for a whole array of samples, in batches."""
    chunks = [softmax(forward(net, images[start:start + batch_size]))
              for start in range(0, len(images), batch_size)]
    if not chunks:
        return np.zeros((0,) + tuple(net.output_shape), dtype=net.parameters.dtype)
    return np.concatenate(chunks)
