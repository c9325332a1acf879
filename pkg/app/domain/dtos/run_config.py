from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional, Tuple
from enum import Enum

from app.core.config import settings
from app.domain.masks import Granularity, MaskScope

class DatasetName(str, Enum):
    CIFAR10 = "cifar10"
    CIFAR100 = "cifar100"
    MNIST = "mnist"
    SYNTHETIC = "synthetic"

class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"

class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    STEP_LINEAR = "step-linear"
    ONE_CYCLE = "one-cycle"

class PruneMode(str, Enum):
    RANDOM = "random"
    ANTI_RANDOM_PAIRS = "anti-random-pairs"
    ANTI_RANDOM_PARTITION = "anti-random-partition"

class BaselineMode(str, Enum):
    NONE = "none"
    INDEPENDENT = "independent"
    BAGGED = "bagged"

class AblationAxis(str, Enum):
    SPARSITY = "sparsity"
    GRANULARITY = "granularity"
    ENSEMBLE_SIZE = "ensemble-size"
    PRUNE_TUNE = "prune-tune"

class RunConfig(BaseModel):
    """Declarative experiment description; unknown keys are rejected.

    Defaults follow the 16-epoch small-budget protocol: 8 parent epochs,
    8 children at 50% random connection sparsity, 1 epoch of constant-rate
    ADAM tuning each.
    """
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # model / data
    model: str = "lenet-s"
    num_classes: Optional[int] = Field(default=None, ge=2)  # None: from dataset
    dataset: DatasetName = DatasetName.CIFAR10
    data_dir: str = Field(default_factory=lambda: settings.DATA_DIR)
    train_subset: int = Field(default=0, ge=0)  # 0 keeps the full split
    test_subset: int = Field(default=0, ge=0)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    seeds: List[int] = Field(default_factory=list)
    batch_size: int = Field(default_factory=lambda: settings.BATCH_SIZE, ge=1)

    # budget split
    parent_epochs: int = Field(default=8, ge=1)
    child_epochs: int = Field(default=1, ge=0)
    num_children: int = Field(default=8, ge=1)

    # parent training
    parent_optimizer: OptimizerKind = OptimizerKind.ADAM
    parent_schedule: ScheduleKind = ScheduleKind.CONSTANT
    parent_lr: float = Field(default=0.001, ge=0)
    parent_lr_initial: float = Field(default=0.1, gt=0)
    parent_lr_final: float = Field(default=0.001, gt=0)
    decay_start: float = Field(default=0.5, ge=0, le=1)
    decay_end: float = Field(default=0.9, ge=0, le=1)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=0.0005, ge=0)

    # pruning
    prune_mode: PruneMode = PruneMode.RANDOM
    sparsity: float = Field(default=0.5, ge=0, lt=1)
    scope: MaskScope = MaskScope.GLOBAL
    granularity: Granularity = Granularity.CONNECTION
    prune_output_layer: bool = False
    prune_biases: bool = False

    # tuning
    tuning: ScheduleKind = ScheduleKind.CONSTANT
    tune_optimizer: OptimizerKind = OptimizerKind.ADAM
    tune_lr: Optional[float] = Field(default=None, ge=0)  # None: last parent rate
    lr_min: float = Field(default=0.001, gt=0)
    lr_max: float = Field(default=0.1, gt=0)
    lr_final: float = Field(default=1e-7, gt=0)
    warmup_frac: float = Field(default=0.10, gt=0, lt=1)
    bagging_fraction: float = Field(default=0.0, ge=0, le=1)  # 0 disables bagging
    bagging_replace: bool = False

    # baselines
    prune_tune: bool = True  # false runs only the baseline
    baseline: BaselineMode = BaselineMode.NONE

    # augmentation / evaluation
    augment_crop: bool = False
    augment_flip: bool = False
    normalize: bool = True
    ece_bins: int = Field(default=15, ge=1)
    track_tuning_epochs: bool = False
    diversity: bool = True

    # ablation
    ablation_axis: AblationAxis = AblationAxis.SPARSITY
    sparsities: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    ensemble_sizes: List[int] = Field(default_factory=lambda: [2, 4, 8, 16])

    # landscape
    landscape_range: Tuple[float, float] = (-1.0, 1.0)
    landscape_resolution: int = Field(default=11, ge=1)
    landscape_subset: int = Field(default=1000, ge=1)

    # execution / output
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)
    report_path: Optional[str] = None

    @field_validator("seeds", "sparsities", "ensemble_sizes", "landscape_range", mode="before")
    @classmethod
    def split_comma_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("tune_lr", "num_classes", "report_path", mode="before")
    @classmethod
    def empty_means_unset(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "parent"):
            return None
        return value

    @model_validator(mode="after")
    def consistent(self):
        if self.decay_start >= self.decay_end:
            raise ValueError("decay_start must be smaller than decay_end")
        if self.landscape_range[0] > 0 or self.landscape_range[1] < 0:
            raise ValueError("landscape_range must contain 0")
        if any(not 0 <= s < 1 for s in self.sparsities):
            raise ValueError("sparsities must lie in [0, 1)")
        if any(n < 1 for n in self.ensemble_sizes):
            raise ValueError("ensemble_sizes must be positive")
        return self

    @property
    def total_epochs(self) -> int:
        """parent epochs + children x child epochs"""
        return self.parent_epochs + self.num_children * self.child_epochs

    @property
    def run_seeds(self) -> List[int]:
        return list(self.seeds) or [self.seed]
