import logging
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm.contrib.concurrent import thread_map

from app.core.config import settings
from app.core.seeding import derive_seed
from app.domain.dataset import Dataset, bootstrap_subset
from app.domain.dtos.report import Phase, ReportRecord, TrainingLog
from app.domain.dtos.run_config import BaselineMode, RunConfig, ScheduleKind
from app.infra.datasets import load_datasets
from app.infra.repositories.report_repository import ReportRepository
from app.nn.models import build_lenet
from app.nn.network import NetworkGraph, predict_proba
from app.services.augmentation import AugmentPolicy, compute_channel_stats, normalize_dataset
from app.services.diversity import DiversityMeasure, pairwise_matrix
from app.services.ensemble_service import (
    ChildMember,
    EnsembleState,
    average_probabilities,
    spawn_children,
    train_parent,
    tune_child,
)
from app.services.metrics import PredictionSet, evaluate_predictions
from app.services.optimizers import build_optimizer
from app.services.schedules import Schedule
from app.services.training_service import train_epochs

logger = logging.getLogger(__name__)

SUMMARY_PHASES = (Phase.PARENT, Phase.ENSEMBLE, Phase.INDEPENDENT, Phase.BAGGED)
DEFAULT_BAG_FRACTION = 0.9


@dataclass
class ExperimentContext:
    config: RunConfig
    train: Dataset
    test: Dataset
    policy: AugmentPolicy
    reports: ReportRepository

    def emit(self, record: ReportRecord) -> ReportRecord:
        logger.info(record.summary_line())
        return self.reports.insert(record)


@dataclass
class ExperimentResult:
    records: List[ReportRecord] = field(default_factory=list)

    def by_phase(self, phase: Phase) -> List[ReportRecord]:
        return [r for r in self.records if r.phase == Phase(phase).value]


def prepare_context(config: RunConfig, reports: Optional[ReportRepository] = None,
                    train: Optional[Dataset] = None, test: Optional[Dataset] = None) -> ExperimentContext:
    """Load (or accept) the splits and normalize both with training-split statistics."""
    if train is None or test is None:
        train, test = load_datasets(config)
    if config.normalize:
        channel_stats = compute_channel_stats(train)
        train = normalize_dataset(train, channel_stats)
        test = normalize_dataset(test, channel_stats)
    policy = AugmentPolicy(crop_pad=4 if config.augment_crop else 0, hflip=config.augment_flip)
    return ExperimentContext(config, train, test, policy, reports or ReportRepository(config.report_path))


def parent_schedule(config: RunConfig) -> Schedule:
    kind = ScheduleKind(config.parent_schedule)
    if kind == ScheduleKind.STEP_LINEAR:
        return Schedule.step_linear(config.parent_lr_initial, config.parent_lr_final,
                                    config.decay_start, config.decay_end)
    if kind == ScheduleKind.ONE_CYCLE:
        return Schedule.one_cycle(config.lr_min, config.lr_max, config.lr_final, config.warmup_frac)
    return Schedule.constant(config.parent_lr)


def tuning_schedule(config: RunConfig, parent_last_lr: Optional[float]) -> Schedule:
    """Constant tuning falls back to the parent's last learning rate when tune_lr is unset."""
    kind = ScheduleKind(config.tuning)
    if kind == ScheduleKind.ONE_CYCLE:
        return Schedule.one_cycle(config.lr_min, config.lr_max, config.lr_final, config.warmup_frac)
    if kind == ScheduleKind.STEP_LINEAR:
        return Schedule.step_linear(config.parent_lr_initial, config.parent_lr_final,
                                    config.decay_start, config.decay_end)
    if config.tune_lr is not None:
        return Schedule.constant(config.tune_lr)
    return Schedule.constant(parent_last_lr if parent_last_lr is not None else config.parent_lr)


def new_network(ctx: ExperimentContext, seed: int, stream: str = "parent-init") -> NetworkGraph:
    return build_lenet(ctx.config.model, ctx.config.num_classes or ctx.train.num_classes,
                       seed=derive_seed(seed, stream), input_shape=ctx.train.sample_shape)


def predict_test_set(ctx: ExperimentContext, net: NetworkGraph) -> np.ndarray:
    return predict_proba(net, ctx.test.images, settings.EVAL_BATCH_SIZE)


def metric_record(ctx: ExperimentContext, phase: Phase, member_id: Optional[str], probs: np.ndarray,
                  seed: int, epochs: Optional[float], wall_time: float = 0.0,
                  extra: Optional[Dict] = None) -> ReportRecord:
    summary = evaluate_predictions(PredictionSet(probs, ctx.test.labels), ctx.config.ece_bins)
    return ReportRecord(phase=phase, member_id=member_id, accuracy=summary.accuracy, nll=summary.nll,
                        ece=summary.ece, brier=summary.brier, wall_time=wall_time, seed=seed,
                        epochs=epochs, extra=extra or {})


def run_parent(ctx: ExperimentContext, seed: int) -> Tuple[NetworkGraph, TrainingLog, np.ndarray]:
    config = ctx.config
    started = time.perf_counter()
    optimizer = build_optimizer(config.parent_optimizer, config.momentum, config.weight_decay)
    parent, log = train_parent(new_network(ctx, seed), ctx.train, config.parent_epochs, optimizer,
                               parent_schedule(config), derive_seed(seed, "parent-train"),
                               config.batch_size, ctx.policy)
    probs = predict_test_set(ctx, parent)
    ctx.emit(metric_record(ctx, Phase.PARENT, "parent", probs, seed, config.parent_epochs,
                           time.perf_counter() - started, {"last_lr": log.last_lr}))
    return parent, log, probs


def _tune_member(ctx: ExperimentContext, config: RunConfig, child: ChildMember,
                 parent_log: TrainingLog) -> ChildMember:
    started = time.perf_counter()
    optimizer = build_optimizer(config.tune_optimizer, config.momentum, config.weight_decay)
    callback = None
    if config.track_tuning_epochs:
        def callback(epoch: int, net: NetworkGraph) -> None:
            child.epoch_probs.append(predict_test_set(ctx, net))
    child.net, child.log = tune_child(
        child.net, child.mask, ctx.train, config.child_epochs,
        tuning_schedule(config, parent_log.last_lr), optimizer, child.seed,
        config.bagging_fraction, config.bagging_replace, config.batch_size, ctx.policy,
        on_epoch_end=callback, desc=child.member_id,
    )
    logger.debug(f"{child.member_id} tuned in {time.perf_counter() - started:.1f}s")
    return child


def tune_children(ctx: ExperimentContext, config: RunConfig, state: EnsembleState) -> EnsembleState:
    """Tune every child, on ``workers`` threads when more than one; order of results is fixed."""
    tune = lambda child: _tune_member(ctx, config, child, state.parent_log)  # noqa: E731
    if config.workers > 1 and state.size > 1:
        state.children = list(thread_map(tune, state.children, max_workers=config.workers,
                                         desc="children", disable=not sys.stderr.isatty()))
    else:
        state.children = [tune(child) for child in state.children]
    return state


def diversity_record(ctx: ExperimentContext, member_probs: Sequence[np.ndarray], seed: int,
                     extra: Optional[Dict] = None) -> Optional[ReportRecord]:
    if len(member_probs) < 2:
        return None
    values = {f"d_{m.value}": pairwise_matrix(member_probs, m).mean for m in DiversityMeasure}
    return ReportRecord(phase=Phase.DIVERSITY, member_id="ensemble", seed=seed,
                        extra={**values, "members": len(member_probs), **(extra or {})})


def run_prune_and_tune(ctx: ExperimentContext, parent: NetworkGraph, parent_log: TrainingLog, seed: int,
                       config: Optional[RunConfig] = None, emit_members: bool = True,
                       extra: Optional[Dict] = None) -> Tuple[EnsembleState, List[np.ndarray], ReportRecord]:
    """Spawn, tune and evaluate one ensemble from a trained parent."""
    config = config or ctx.config
    extra = extra or {}
    started = time.perf_counter()
    state = spawn_children(parent, config.prune_mode, config.num_children, config.sparsity,
                           config.granularity, config.scope, seed, config.prune_output_layer,
                           config.prune_biases, parent_log)
    state = tune_children(ctx, config, state)

    member_probs = [predict_test_set(ctx, child.net) for child in state.children]
    if emit_members:
        for child, probs in zip(state.children, member_probs):
            ctx.emit(metric_record(ctx, Phase.CHILD, child.member_id, probs, child.seed, config.child_epochs,
                                   extra={"sparsity": child.mask.sparsity, **extra}))
    if emit_members and config.track_tuning_epochs and config.child_epochs:
        for epoch in range(1, config.child_epochs + 1):
            probs = average_probabilities([child.epoch_probs[epoch - 1] for child in state.children])
            ctx.emit(metric_record(ctx, Phase.ENSEMBLE, f"ensemble@{epoch}", probs, seed,
                                   config.parent_epochs + config.num_children * epoch,
                                   extra={"tuning_epoch": epoch, **extra}))
    ensemble = metric_record(ctx, Phase.ENSEMBLE, "ensemble", average_probabilities(member_probs), seed,
                             config.total_epochs, time.perf_counter() - started,
                             {"members": state.size, **extra})
    if emit_members:
        ctx.emit(ensemble)
    if config.diversity and emit_members:
        record = diversity_record(ctx, member_probs, seed, extra)
        if record is not None:
            ctx.emit(record)
    return state, member_probs, ensemble


def run_independent(ctx: ExperimentContext, seed: int) -> ReportRecord:
    """One model from scratch for the whole epoch budget."""
    config = ctx.config
    started = time.perf_counter()
    net = new_network(ctx, seed, "independent-init")
    optimizer = build_optimizer(config.parent_optimizer, config.momentum, config.weight_decay)
    train_epochs(net, ctx.train, config.total_epochs, optimizer, parent_schedule(config),
                 derive_seed(seed, "independent-train"), config.batch_size, ctx.policy, desc="independent")
    return ctx.emit(metric_record(ctx, Phase.INDEPENDENT, "independent", predict_test_set(ctx, net), seed,
                                  config.total_epochs, time.perf_counter() - started))


def run_bagged(ctx: ExperimentContext, seed: int) -> ReportRecord:
    """num_children models from scratch, budget/num_children epochs each, on 90% subsets."""
    config = ctx.config
    started = time.perf_counter()
    count = config.num_children
    epochs = max(1, config.total_epochs // count)
    fraction = config.bagging_fraction or DEFAULT_BAG_FRACTION
    member_probs = []
    for i in range(count):
        net = new_network(ctx, seed, f"bagged-init-{i}")
        subset = bootstrap_subset(ctx.train, fraction, derive_seed(seed, "bagged-subset", i),
                                  config.bagging_replace)
        optimizer = build_optimizer(config.parent_optimizer, config.momentum, config.weight_decay)
        train_epochs(net, subset, epochs, optimizer, parent_schedule(config),
                     derive_seed(seed, "bagged-train", i), config.batch_size, ctx.policy, desc=f"bagged-{i:03d}")
        probs = predict_test_set(ctx, net)
        member_probs.append(probs)
        ctx.emit(metric_record(ctx, Phase.BAGGED_MEMBER, f"bagged-{i:03d}", probs, seed, epochs))
    return ctx.emit(metric_record(ctx, Phase.BAGGED, "bagged", average_probabilities(member_probs), seed,
                                  epochs * count, time.perf_counter() - started, {"members": count}))


def run_single_seed(ctx: ExperimentContext, seed: int) -> None:
    config = ctx.config
    if config.prune_tune:
        parent, parent_log, _ = run_parent(ctx, seed)
        run_prune_and_tune(ctx, parent, parent_log, seed)
    baseline = BaselineMode(config.baseline)
    if baseline == BaselineMode.INDEPENDENT:
        run_independent(ctx, seed)
    elif baseline == BaselineMode.BAGGED:
        run_bagged(ctx, seed)


def _stderr(values: np.ndarray) -> float:
    return float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def summarize_trials(records: Sequence[ReportRecord]) -> List[ReportRecord]:
    """Mean and standard error per phase over seeds, plus Welch t-tests of
    ensemble accuracy against each baseline that was run."""
    summaries = []
    accuracies: Dict[str, np.ndarray] = {}
    for phase in SUMMARY_PHASES:
        rows = [r for r in records if r.phase == phase.value and r.member_id == phase.value]
        if not rows:
            continue
        extra = {"phase": phase.value, "trials": len(rows)}
        means = {}
        for metric in ("accuracy", "nll", "ece", "brier"):
            values = np.array([getattr(r, metric) for r in rows], dtype=np.float64)
            means[metric] = float(values.mean())
            extra[f"{metric}_stderr"] = _stderr(values)
        accuracies[phase.value] = np.array([r.accuracy for r in rows], dtype=np.float64)
        summaries.append(ReportRecord(phase=Phase.SUMMARY, member_id=phase.value, epochs=rows[0].epochs,
                                      extra=extra, **means))

    ensemble = accuracies.get(Phase.ENSEMBLE.value)
    for baseline in (Phase.INDEPENDENT, Phase.BAGGED, Phase.PARENT):
        other = accuracies.get(baseline.value)
        if ensemble is None or other is None or len(ensemble) < 2 or len(other) < 2:
            continue
        result = stats.ttest_ind(ensemble, other, equal_var=False)
        summaries.append(ReportRecord(
            phase=Phase.SUMMARY, member_id=f"ensemble-vs-{baseline.value}",
            extra={"difference": float(ensemble.mean() - other.mean()),
                   "t_statistic": _finite_or_none(result.statistic),
                   "p_value": _finite_or_none(result.pvalue)},
        ))
    return summaries


def run_experiment(config: RunConfig, reports: Optional[ReportRepository] = None,
                   train: Optional[Dataset] = None, test: Optional[Dataset] = None) -> ExperimentResult:
    """Prune-and-tune (and any baseline) for every configured seed."""
    ctx = prepare_context(config, reports, train, test)
    first = len(ctx.reports.records)
    seeds = config.run_seeds
    logger.info(f"Running experiment on {len(ctx.train)} train / {len(ctx.test)} test samples, seeds {seeds}")
    for seed in seeds:
        try:
            run_single_seed(ctx, seed)
        except Exception as e:
            logger.error(f"Experiment failed for seed {seed}: {e}")
            raise
    if len(seeds) > 1:
        for record in summarize_trials(ctx.reports.records[first:]):
            ctx.emit(record)
    return ExperimentResult(list(ctx.reports.records[first:]))
