"""Parent training, child spawning, child tuning and softmax averaging."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import ConfigError, MaskError, ShapeError
from app.core.seeding import child_seed, derive_seed
from app.domain.dataset import Dataset, bootstrap_subset
from app.domain.dtos.report import TrainingLog
from app.domain.dtos.run_config import PruneMode
from app.domain.masks import Granularity, MaskScope, PruneMask, prunable_set
from app.nn.functional import softmax
from app.nn.network import NetworkGraph, forward
from app.services.augmentation import AugmentPolicy
from app.services.pruning import apply_mask, complement, partition, random_mask
from app.services.schedules import Schedule
from app.services.training_service import EpochCallback, train_epochs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BudgetSplit:
    """Epoch budget: total = parent_epochs + num_children * child_epochs."""
    parent_epochs: int
    child_epochs: int
    num_children: int

    def __post_init__(self):
        if self.parent_epochs < 0 or self.child_epochs < 0:
            raise ConfigError("Epoch counts must be non-negative")
        if self.num_children < 1:
            raise ConfigError(f"num_children must be >= 1, got {self.num_children}")

    @property
    def total_epochs(self) -> int:
        return self.parent_epochs + self.num_children * self.child_epochs


@dataclass
class ChildMember:
    index: int
    mask: PruneMask
    net: NetworkGraph
    seed: int
    log: TrainingLog = field(default_factory=TrainingLog)
    epoch_probs: List[np.ndarray] = field(default_factory=list)

    @property
    def member_id(self) -> str:
        return f"child-{self.index:03d}"


@dataclass
class EnsembleState:
    parent: NetworkGraph
    parent_log: TrainingLog
    children: List[ChildMember]

    def __post_init__(self):
        if not self.children:
            raise ConfigError("An ensemble needs at least one child")

    @property
    def size(self) -> int:
        return len(self.children)

    @property
    def members(self) -> List[NetworkGraph]:
        return [child.net for child in self.children]


def train_parent(
    net: NetworkGraph,
    dataset: Dataset,
    epochs: int,
    optimizer,
    schedule: Schedule,
    seed: int,
    batch_size: int = 128,
    policy: Optional[AugmentPolicy] = None,
    eval_set: Optional[Dataset] = None,
) -> Tuple[NetworkGraph, TrainingLog]:
    """Train a copy of ``net``; the input graph is left untouched."""
    if epochs < 1:
        raise ConfigError(f"Parent training needs at least one epoch, got {epochs}")
    parent = net.copy()
    log = train_epochs(parent, dataset, epochs, optimizer, schedule, seed, batch_size,
                       policy, eval_set, desc="parent")
    return parent, log


def spawn_masks(
    parent: NetworkGraph,
    mode,
    n: int,
    sparsity: float,
    seed: int,
    granularity=Granularity.CONNECTION,
    scope=MaskScope.GLOBAL,
    include_output_layer: bool = False,
    include_biases: bool = False,
) -> List[PruneMask]:
    mode = PruneMode(mode)
    granularity = Granularity(granularity)
    if n < 1:
        raise ConfigError(f"Need at least one child, got {n}")
    prunable = prunable_set(parent, include_output_layer, include_biases)

    if mode == PruneMode.RANDOM:
        return [random_mask(derive_seed(child_seed(seed, i), "mask"), prunable, sparsity, scope, granularity)
                for i in range(n)]
    if mode == PruneMode.ANTI_RANDOM_PAIRS:
        if n % 2 or sparsity != 0.5:
            raise MaskError(f"anti-random pairs need an even child count and sparsity 0.5, got n={n}, s={sparsity}")
        masks = []
        for pair in range(n // 2):
            mask = random_mask(derive_seed(seed, "pair", pair), prunable, 0.5, scope, granularity)
            masks.extend([mask, complement(mask)])
        return masks
    if granularity != Granularity.CONNECTION:
        raise MaskError("anti-random partition is defined for connection pruning only")
    return partition(derive_seed(seed, "partition"), prunable, n)


def spawn_children(
    parent: NetworkGraph,
    mode,
    n: int,
    sparsity: float,
    granularity=Granularity.CONNECTION,
    scope=MaskScope.GLOBAL,
    seed: int = 0,
    include_output_layer: bool = False,
    include_biases: bool = False,
    parent_log: Optional[TrainingLog] = None,
) -> EnsembleState:
    """n masked deep copies of the parent; the parent itself is not modified."""
    masks = spawn_masks(parent, mode, n, sparsity, seed, granularity, scope,
                        include_output_layer, include_biases)
    children = [ChildMember(i, mask, apply_mask(parent, mask), child_seed(seed, i))
                for i, mask in enumerate(masks)]
    logger.info(f"Spawned {n} children ({PruneMode(mode).value}, mean sparsity "
                f"{np.mean([m.sparsity for m in masks]):.3f})")
    return EnsembleState(parent, parent_log or TrainingLog(), children)


def tune_child(
    child: NetworkGraph,
    mask: PruneMask,
    dataset: Dataset,
    epochs: int,
    schedule: Schedule,
    optimizer,
    seed: int,
    bagging_fraction: float = 0.0,
    bagging_replace: bool = False,
    batch_size: int = 128,
    policy: Optional[AugmentPolicy] = None,
    eval_set: Optional[Dataset] = None,
    on_epoch_end: Optional[EpochCallback] = None,
    desc: str = "child",
) -> Tuple[NetworkGraph, TrainingLog]:
    """Tune a copy of the masked child; masked entries stay exactly 0.

    With bagging on, a fresh floor(f * N) subset drawn from the child's seed
    replaces the full training set.
    """
    if child.mask != mask:
        child = apply_mask(child, mask)
    if epochs == 0:
        return child, TrainingLog()
    data = dataset
    if bagging_fraction:
        data = bootstrap_subset(dataset, bagging_fraction, derive_seed(seed, "bagging"), bagging_replace)
        logger.info(f"{desc}: bagging {len(data)}/{len(dataset)} samples")
    tuned = child.copy()
    log = train_epochs(tuned, data, epochs, optimizer, schedule, derive_seed(seed, "tune"), batch_size,
                       policy, eval_set, on_epoch_end, desc=desc)
    return tuned, log


def average_probabilities(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of member softmax rows.

    Values are sorted along the member axis before summing in float64, so the
    result does not depend on member order and S identical members give back
    the single member's rows.
    """
    if not member_probs:
        raise ConfigError("An ensemble needs at least one member")
    shapes = {np.shape(p) for p in member_probs}
    if len(shapes) != 1:
        raise ShapeError(f"Member prediction shapes differ: {sorted(shapes)}")
    stacked = np.sort(np.stack([np.asarray(p, dtype=np.float64) for p in member_probs]), axis=0)
    dtype = np.result_type(*[np.asarray(p).dtype for p in member_probs])
    return (stacked.sum(axis=0) / len(member_probs)).astype(dtype)


def predict_ensemble(ensemble: Union[EnsembleState, Sequence[NetworkGraph]],
                     batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(labels, averaged probabilities); label ties go to the lowest class index."""
    members = ensemble.members if isinstance(ensemble, EnsembleState) else list(ensemble)
    if not members:
        raise ConfigError("An ensemble needs at least one member")
    if len({m.output_shape for m in members}) != 1:
        raise ShapeError("Ensemble members produce different output shapes")
    probs = average_probabilities([softmax(forward(m, batch)) for m in members])
    return np.argmax(probs, axis=1), probs
