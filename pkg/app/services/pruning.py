import logging
import math
from typing import List, Sequence

import numpy as np

from app.core.errors import MaskError
from app.domain.masks import (
    Granularity,
    MaskScope,
    PrunableSet,
    PruneMask,
    check_same_length,
    ensure_mask_fits,
    exact_floor,
)
from app.nn.layers import ParameterRole
from app.nn.network import NetworkGraph

logger = logging.getLogger(__name__)


def random_mask(
    seed: int,
    prunable: PrunableSet,
    sparsity: float,
    scope: MaskScope = MaskScope.GLOBAL,
    granularity: Granularity = Granularity.CONNECTION,
) -> PruneMask:
    """Uniform random pruning with exact zero-bit quotas.

    Global scope removes floor(s * P) bits over the whole set, layerwise scope
    floor(s * layer size) per layer. Neuron granularity always works per layer
    and removes floor(s * units) whole units (incoming weights, and the bias
    when biases are prunable).
    """
    if not 0 <= sparsity < 1:
        raise MaskError(f"Sparsity must lie in [0, 1), got {sparsity}")
    scope = MaskScope(scope)
    granularity = Granularity(granularity)
    rng = np.random.default_rng(seed)
    bits = np.ones(prunable.size, dtype=bool)

    if granularity == Granularity.NEURON:
        for layer in prunable.layers():
            segments = prunable.segments_of(layer)
            weight = next((s for s in segments if s.role == ParameterRole.WEIGHT), None)
            if weight is None:
                continue
            dropped = exact_floor(sparsity * weight.units)
            if dropped >= weight.units:
                raise MaskError(f"Sparsity {sparsity} would remove every unit of layer {layer}")
            units = rng.choice(weight.units, size=dropped, replace=False)
            for segment in segments:
                view = bits[segment.offset:segment.offset + segment.size].reshape(segment.units, -1)
                view[units] = False
    elif scope == MaskScope.LAYERWISE:
        for layer in prunable.layers():
            segments = prunable.segments_of(layer)
            start = segments[0].offset
            size = sum(s.size for s in segments)
            dropped = exact_floor(sparsity * size)
            bits[start + rng.permutation(size)[:dropped]] = False
    else:
        dropped = exact_floor(sparsity * prunable.size)
        bits[rng.permutation(prunable.size)[:dropped]] = False

    return PruneMask(bits, prunable, scope, granularity)


def complement(mask: PruneMask) -> PruneMask:
    """Anti-random counterpart: every bit flipped."""
    return PruneMask(~mask.bits, mask.prunable, mask.scope, mask.granularity)


def partition(seed: int, prunable: PrunableSet, n: int) -> List[PruneMask]:
    """n disjoint masks covering the set, kept counts balanced to within one.

    A seeded permutation deals the indices round-robin, so the first
    P mod n masks keep one extra parameter.
    """
    if n < 2:
        raise MaskError(f"Partition needs n >= 2, got {n}")
    if n > prunable.size:
        raise MaskError(f"Cannot partition {prunable.size} parameters into {n} non-empty masks")
    rng = np.random.default_rng(seed)
    owner = np.empty(prunable.size, dtype=np.int64)
    owner[rng.permutation(prunable.size)] = np.arange(prunable.size) % n
    return [PruneMask(owner == i, prunable) for i in range(n)]


def cartesian_distance(a: PruneMask, b: PruneMask) -> float:
    """sqrt of the Hamming distance between two masks."""
    check_same_length(a, b)
    return math.sqrt(int(np.count_nonzero(a.bits != b.bits)))


def total_distance(masks: Sequence[PruneMask]) -> float:
    """Sum of cartesian distances over all ordered pairs (i = j included)."""
    if not masks:
        raise MaskError("total_distance needs at least one mask")
    for other in masks[1:]:
        check_same_length(masks[0], other)
    total = 0.0
    for a in masks:
        for b in masks:
            total += cartesian_distance(a, b)
    return total


def apply_mask(net: NetworkGraph, mask: PruneMask) -> NetworkGraph:
    """Child graph: parent weights with pruned entries set to 0, mask attached."""
    ensure_mask_fits(net, mask)
    child = net.copy()
    child.mask = mask
    for name, keep in child.keep_arrays().items():
        tensor = child.parameters[name]
        tensor[...] = np.where(keep != 0, tensor, tensor.dtype.type(0))
    logger.debug(f"Applied mask: {mask.kept}/{len(mask)} prunable parameters kept")
    return child
