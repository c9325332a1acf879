import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from app.core.errors import ConfigError, ShapeError
from app.domain.dtos.run_config import OptimizerKind
from app.nn.layers import ParameterRole
from app.nn.network import Gradients, ParameterStore

logger = logging.getLogger(__name__)

KeepArrays = Mapping[str, np.ndarray]


@dataclass
class SgdState:
    momentum: float = 0.9
    weight_decay: float = 0.0005
    nesterov: bool = True
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def _check_step(store: ParameterStore, grads: Gradients, lr: float) -> None:
    if not grads.mirrors(store):
        raise ShapeError("Gradients do not mirror the parameter store")
    if lr < 0:
        raise ConfigError(f"Learning rate must be non-negative, got {lr}")


def _effective_gradient(entry, grads: Gradients, weight_decay: float,
                        keep: Optional[np.ndarray]) -> np.ndarray:
    g = grads[entry.name]
    # decay on weights only
    if weight_decay and entry.role == ParameterRole.WEIGHT:
        g = g + weight_decay * entry.tensor
    if keep is not None:
        g = g * keep
    return g


def _pin_masked(tensor: np.ndarray, keep: Optional[np.ndarray]) -> None:
    if keep is not None:
        tensor[...] = np.where(keep != 0, tensor, tensor.dtype.type(0))


def sgd_nesterov_step(state: SgdState, store: ParameterStore, grads: Gradients,
                      lr: float, mask: Optional[KeepArrays] = None) -> ParameterStore:
    """v <- mu v + g;  w <- w - lr (g + mu v)   (plain momentum when nesterov is off)."""
    _check_step(store, grads, lr)
    mask = mask or {}
    for entry in store:
        keep = mask.get(entry.name)
        g = _effective_gradient(entry, grads, state.weight_decay, keep)
        velocity = state.velocity.get(entry.name)
        if velocity is None:
            velocity = np.zeros_like(entry.tensor)
        velocity = state.momentum * velocity + g
        state.velocity[entry.name] = velocity
        update = g + state.momentum * velocity if state.nesterov else velocity
        entry.tensor -= (lr * update).astype(entry.tensor.dtype, copy=False)
        _pin_masked(entry.tensor, keep)
    return store


def adam_step(state: AdamState, store: ParameterStore, grads: Gradients,
              lr: float, mask: Optional[KeepArrays] = None) -> ParameterStore:
    """Bias-corrected ADAM update."""
    _check_step(store, grads, lr)
    mask = mask or {}
    state.step += 1
    correction1 = 1 - state.beta1 ** state.step
    correction2 = 1 - state.beta2 ** state.step
    for entry in store:
        keep = mask.get(entry.name)
        g = _effective_gradient(entry, grads, state.weight_decay, keep)
        m = state.first_moment.get(entry.name)
        v = state.second_moment.get(entry.name)
        if m is None:
            m = np.zeros_like(entry.tensor)
            v = np.zeros_like(entry.tensor)
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.first_moment[entry.name] = m
        state.second_moment[entry.name] = v
        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        entry.tensor -= (lr * update).astype(entry.tensor.dtype, copy=False)
        _pin_masked(entry.tensor, keep)
    return store


class NesterovSGD:
    def __init__(self, momentum: float = 0.9, weight_decay: float = 0.0005, nesterov: bool = True):
        self.state = SgdState(momentum=momentum, weight_decay=weight_decay, nesterov=nesterov)

    def step(self, store: ParameterStore, grads: Gradients, lr: float,
             mask: Optional[KeepArrays] = None) -> ParameterStore:
        return sgd_nesterov_step(self.state, store, grads, lr, mask)


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def step(self, store: ParameterStore, grads: Gradients, lr: float,
             mask: Optional[KeepArrays] = None) -> ParameterStore:
        return adam_step(self.state, store, grads, lr, mask)


def build_optimizer(kind, momentum: float = 0.9, weight_decay: float = 0.0005):
    """Fresh optimizer state; ADAM runs without weight decay."""
    kind = OptimizerKind(kind)
    if kind == OptimizerKind.SGD:
        return NesterovSGD(momentum=momentum, weight_decay=weight_decay)
    return Adam()
