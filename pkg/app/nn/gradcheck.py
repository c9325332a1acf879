from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.nn.functional import cross_entropy_loss
from app.nn.layers import LayerKind
from app.nn.network import NetworkGraph, prepare_batch, backward


@dataclass(frozen=True)
class GradientCheck:
    max_rel_error: float
    checked: int
    skipped: int


def _loss_and_pattern(net: NetworkGraph, batch: np.ndarray, labels: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """Loss plus the ReLU on/off states and max-pool winners that fix the local linear region."""
    x = prepare_batch(net, batch)
    params = net.parameters.as_dict()
    pattern = []
    for layer in net.layers:
        x, cache = layer.forward(x, params)
        if layer.kind == LayerKind.RELU:
            pattern.append(cache)
        elif layer.kind == LayerKind.MAXPOOL2D:
            pattern.append(cache[1])
    return cross_entropy_loss(x, labels), pattern


def finite_difference(net: NetworkGraph, batch: np.ndarray, labels: np.ndarray,
                      index: int, step: float = 1e-3) -> Tuple[float, bool]:
    """Central difference w.r.t. one global parameter index, in float64.

    The flag is False when a ReLU or max-pool switches between the two difference
    points, where the difference quotient does not approximate the derivative.
    """
    shifted = net.astype(np.float64)
    flat = shifted.parameters.flatten()
    original = flat[index]
    batch = np.asarray(batch, dtype=np.float64)

    flat[index] = original + step
    shifted.parameters.assign_flat(flat)
    loss_plus, pattern_plus = _loss_and_pattern(shifted, batch, labels)
    flat[index] = original - step
    shifted.parameters.assign_flat(flat)
    loss_minus, pattern_minus = _loss_and_pattern(shifted, batch, labels)
    smooth = all(np.array_equal(a, b) for a, b in zip(pattern_plus, pattern_minus))
    return (loss_plus - loss_minus) / (2 * step), smooth


def gradient_check(net: NetworkGraph, batch: np.ndarray, labels: np.ndarray,
                   indices: Sequence[int], step: float = 1e-3, floor: float = 1e-4,
                   limit: Optional[int] = None) -> GradientCheck:
    """Largest |analytic - numeric| / max(|analytic|, |numeric|, floor).

    Analytic gradients come from ``net`` at its own precision; pass
    ``net.astype(np.float64)`` for the 64-bit verification mode. Indices whose
    difference interval crosses a kink are skipped; ``limit`` stops after that many
    checked indices.
    """
    _, grads = backward(net, batch, labels)
    analytic = grads.flatten().astype(np.float64)
    worst = 0.0
    checked = skipped = 0
    for index in indices:
        if limit is not None and checked >= limit:
            break
        numeric, smooth = finite_difference(net, batch, labels, int(index), step)
        if not smooth:
            skipped += 1
            continue
        a = analytic[int(index)]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
        checked += 1
    return GradientCheck(worst, checked, skipped)
