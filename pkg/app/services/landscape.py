"""Two-dimensional loss surfaces around a trained network.

A surface is f(a, b) = L(theta + a * delta + b * rho), with delta and rho
Gaussian directions rescaled group by group to the norms of the weights
they perturb (one group per conv filter or linear row, one per bias).
"""
import logging
import sys
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import numpy as np
from tqdm import tqdm

from app.core.config import settings
from app.core.errors import ConfigError, ShapeError
from app.domain.dataset import Dataset
from app.nn.functional import cross_entropy_loss
from app.nn.layers import ParameterRole
from app.nn.network import NetworkGraph, ParameterStore, forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Direction:
    """Float64 perturbation arrays keyed like the parameter store."""
    values: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def mirrors(self, store: ParameterStore) -> bool:
        return all(name in self.values and self.values[name].shape == store[name].shape for name in store.names)

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values.values()])

    @classmethod
    def zeros_like(cls, store: ParameterStore) -> "Direction":
        return cls({e.name: np.zeros(e.tensor.shape) for e in store})


def filter_groups(tensor: np.ndarray, role: ParameterRole) -> np.ndarray:
    """View with one row per normalization group."""
    if role == ParameterRole.BIAS or tensor.ndim < 2:
        return tensor.reshape(1, -1)
    return tensor.reshape(tensor.shape[0], -1)


def filter_normalized_direction(net: NetworkGraph, seed: int) -> Direction:
    """Gaussian direction with every group scaled to its weight group's norm.

    Masked positions are zeroed before scaling; zero-norm weight groups give
    zero direction groups.
    """
    rng = np.random.default_rng(seed)
    keep = net.keep_arrays()
    values = {}
    for entry in net.parameters:
        raw = rng.standard_normal(entry.tensor.shape)
        if entry.name in keep:
            raw = raw * keep[entry.name]
        d = filter_groups(raw, entry.role)
        theta = filter_groups(entry.tensor.astype(np.float64), entry.role)
        d_norm = np.linalg.norm(d, axis=1, keepdims=True)
        theta_norm = np.linalg.norm(theta, axis=1, keepdims=True)
        scale = np.divide(theta_norm, d_norm, out=np.zeros_like(d_norm), where=d_norm > 0)
        values[entry.name] = (d * scale).reshape(entry.tensor.shape)
    return Direction(values)


def evaluation_loss(net: NetworkGraph, dataset: Dataset, batch_size: int = 0) -> float:
    """Mean cross-entropy over the dataset, accumulated batch by batch."""
    batch_size = batch_size or settings.EVAL_BATCH_SIZE
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        images = dataset.images[start:start + batch_size]
        labels = dataset.labels[start:start + batch_size]
        total += cross_entropy_loss(forward(net, images), labels) * len(labels)
    return total / len(dataset)


def grid_coordinates(bounds: Tuple[float, float], resolution: int) -> np.ndarray:
    lo, hi = float(bounds[0]), float(bounds[1])
    if resolution < 1:
        raise ConfigError(f"resolution must be >= 1, got {resolution}")
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > 0 or hi < 0:
        raise ConfigError(f"Range ({lo}, {hi}) must be finite and contain 0")
    if resolution == 1 or lo == hi:
        return np.zeros(resolution)
    # 0 is always a grid point; intervals are shared between the two sides by length
    intervals = resolution - 1
    below = int(np.rint(intervals * -lo / (hi - lo)))
    if lo < 0 < hi and intervals >= 2:
        below = min(max(below, 1), intervals - 1)
    negative = np.linspace(lo, 0.0, below + 1)[:-1]
    positive = np.linspace(0.0, hi, intervals - below + 1)
    return np.concatenate([negative, positive])


@dataclass
class LossGrid:
    """values[i, j] = f(alphas[i], betas[j])."""
    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def resolution(self) -> int:
        return len(self.alphas)

    @property
    def center(self) -> float:
        i = np.flatnonzero(self.alphas == 0.0)
        j = np.flatnonzero(self.betas == 0.0)
        if not i.size or not j.size:
            raise ShapeError("Grid has no (0, 0) cell")
        return float(self.values[i[0], j[0]])


def _perturbed(base: Dict[str, np.ndarray], delta: Direction, rho: Direction,
               alpha: float, beta: float, dtype) -> Iterator[Tuple[str, np.ndarray]]:
    for name, theta in base.items():
        yield name, (theta + alpha * delta[name] + beta * rho[name]).astype(dtype)


def loss_grid(net: NetworkGraph, dataset: Dataset, delta: Direction, rho: Direction,
              alpha_range: Tuple[float, float] = (-1.0, 1.0), beta_range: Tuple[float, float] = (-1.0, 1.0),
              resolution: int = 11, batch_size: int = 0) -> LossGrid:
    """Loss at every grid point, evaluated on a scratch copy of ``net``."""
    if len(dataset) == 0:
        raise ConfigError("Landscape evaluation needs a nonempty dataset")
    if not (delta.mirrors(net.parameters) and rho.mirrors(net.parameters)):
        raise ShapeError("Directions do not mirror the network's parameters")
    alphas = grid_coordinates(alpha_range, resolution)
    betas = grid_coordinates(beta_range, resolution)
    dtype = net.parameters.dtype
    base = {e.name: e.tensor.astype(np.float64) for e in net.parameters}
    scratch = net.copy()
    values = np.empty((len(alphas), len(betas)))
    rows = tqdm(enumerate(alphas), total=len(alphas), desc="landscape", disable=not sys.stderr.isatty(), leave=False)
    for i, alpha in rows:
        for j, beta in enumerate(betas):
            for name, tensor in _perturbed(base, delta, rho, alpha, beta, dtype):
                scratch.parameters[name][...] = tensor
            values[i, j] = evaluation_loss(scratch, dataset, batch_size)
        logger.info(f"landscape row {i + 1}/{len(alphas)} alpha={alpha:+.3f} "
                    f"min={values[i].min():.4f} max={values[i].max():.4f}")
    metadata = {"alpha_range": list(alpha_range), "beta_range": list(beta_range),
                "resolution": resolution, "subset_size": len(dataset)}
    return LossGrid(alphas, betas, values, metadata)
