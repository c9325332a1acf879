import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.errors import MaskError
from app.nn.layers import ParameterRole
from app.nn.network import NetworkGraph, ParameterStore


class MaskScope(str, Enum):
    GLOBAL = "global"
    LAYERWISE = "layerwise"


class Granularity(str, Enum):
    CONNECTION = "connection"
    NEURON = "neuron"


def exact_floor(value: float) -> int:
    """floor() that forgives binary round-off, so 0.57 * 100 gives 57."""
    return int(math.floor(value + 1e-9))


@dataclass(frozen=True)
class PrunableSegment:
    name: str            # parameter entry name
    layer: str
    role: ParameterRole
    shape: Tuple[int, ...]
    offset: int          # position inside the mask bit vector
    global_offset: int   # position inside the ParameterStore flattening

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def units(self) -> int:
        return self.shape[0]


@dataclass(frozen=True)
class PrunableSet:
    """Ordered parameter indices a mask ranges over, grouped by entry."""
    segments: Tuple[PrunableSegment, ...]
    include_output_layer: bool = False
    include_biases: bool = False

    @classmethod
    def flat(cls, size: int, name: str = "flat") -> "PrunableSet":
        """A single weight segment of ``size`` indices, not tied to any network."""
        return cls((PrunableSegment(f"{name}.weight", name, ParameterRole.WEIGHT, (size,), 0, 0),))

    @property
    def size(self) -> int:
        return sum(segment.size for segment in self.segments)

    def __len__(self) -> int:
        return self.size

    @property
    def indices(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([
            np.arange(s.global_offset, s.global_offset + s.size, dtype=np.int64) for s in self.segments
        ])

    def layers(self) -> List[str]:
        seen: List[str] = []
        for segment in self.segments:
            if segment.layer not in seen:
                seen.append(segment.layer)
        return seen

    def segments_of(self, layer: str) -> List[PrunableSegment]:
        return [s for s in self.segments if s.layer == layer]


def prunable_set(net: NetworkGraph, include_output_layer: bool = False,
                 include_biases: bool = False) -> PrunableSet:
    """Default: every conv/linear weight except the last layer's; no biases."""
    param_layers = [layer.name for layer in net.layers if layer.parameter_shapes()]
    output_layer = param_layers[-1] if param_layers else None
    segments = []
    offset = 0
    for entry in net.parameters:
        if entry.layer == output_layer and not include_output_layer:
            continue
        if entry.role == ParameterRole.BIAS and not include_biases:
            continue
        segment = PrunableSegment(
            name=entry.name,
            layer=entry.layer,
            role=entry.role,
            shape=tuple(entry.tensor.shape),
            offset=offset,
            global_offset=net.parameters.offset(entry.name),
        )
        segments.append(segment)
        offset += segment.size
    return PrunableSet(tuple(segments), include_output_layer, include_biases)


@dataclass(frozen=True, eq=False)
class PruneMask:
    """Bit vector over a PrunableSet; True keeps the parameter, False prunes it."""
    bits: np.ndarray
    prunable: PrunableSet
    scope: MaskScope = MaskScope.GLOBAL
    granularity: Granularity = Granularity.CONNECTION

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.prunable.size,):
            raise MaskError(f"Mask has {bits.size} bits but the prunable set has {self.prunable.size}")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PruneMask)
            and self.prunable == other.prunable
            and np.array_equal(self.bits, other.bits)
        )

    __hash__ = None

    @property
    def kept(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def sparsity(self) -> float:
        if not len(self):
            return 0.0
        return (len(self) - self.kept) / len(self)

    def keep_arrays(self, store: ParameterStore) -> Dict[str, np.ndarray]:
        """0/1 arrays shaped like the store entries the mask prunes.

        Under neuron granularity the bias of a unit whose incoming weights
        are all pruned is pruned too, even when biases are not in the set.
        """
        keep: Dict[str, np.ndarray] = {}
        for segment in self.prunable.segments:
            tensor = store[segment.name]
            seg_bits = self.bits[segment.offset:segment.offset + segment.size]
            if not seg_bits.all():
                keep[segment.name] = seg_bits.reshape(segment.shape).astype(tensor.dtype)
            if self.granularity == Granularity.NEURON and segment.role == ParameterRole.WEIGHT:
                bias_name = f"{segment.layer}.bias"
                if bias_name in store and bias_name not in self._bias_names():
                    alive = seg_bits.reshape(segment.units, -1).any(axis=1)
                    if not alive.all():
                        keep[bias_name] = alive.astype(tensor.dtype)
        return keep

    def _bias_names(self) -> List[str]:
        return [s.name for s in self.prunable.segments if s.role == ParameterRole.BIAS]

    def to_words(self) -> np.ndarray:
        """Packed little-endian 64-bit words; bit i is word[i // 64] >> (i % 64) & 1."""
        packed = np.packbits(self.bits, bitorder="little")
        padded = np.zeros(-(-packed.size // 8) * 8, dtype=np.uint8)
        padded[:packed.size] = packed
        return padded.view("<u8")

    @classmethod
    def from_words(cls, words: np.ndarray, bit_length: int, prunable: PrunableSet,
                   scope: MaskScope = MaskScope.GLOBAL,
                   granularity: Granularity = Granularity.CONNECTION) -> "PruneMask":
        raw = np.asarray(words, dtype="<u8").view(np.uint8)
        bits = np.unpackbits(raw, bitorder="little", count=bit_length).astype(bool)
        return cls(bits, prunable, scope, granularity)

    def describe(self) -> Dict[str, object]:
        return {
            "bit_length": len(self),
            "scope": self.scope.value,
            "granularity": self.granularity.value,
            "include_output_layer": self.prunable.include_output_layer,
            "include_biases": self.prunable.include_biases,
            "sparsity": self.sparsity,
        }


def check_same_length(a: PruneMask, b: PruneMask) -> None:
    if len(a) != len(b):
        raise MaskError(f"Mask lengths differ: {len(a)} vs {len(b)}")


def ensure_mask_fits(net: NetworkGraph, mask: Optional[PruneMask]) -> None:
    """Reject a mask built for a different network structure."""
    if mask is None:
        return
    expected = prunable_set(net, mask.prunable.include_output_layer, mask.prunable.include_biases)
    if expected != mask.prunable:
        raise MaskError("Mask was built for a different network structure")
