"""One-axis sweeps around a shared parent.

Each seed trains one parent; every cell of the sweep spawns and tunes its
own children from that parent and emits one ``ablation`` record.
"""
import logging
import math
from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.domain.dataset import Dataset
from app.domain.dtos.report import Phase, ReportRecord
from app.domain.dtos.run_config import AblationAxis, PruneMode, RunConfig, ScheduleKind
from app.domain.masks import Granularity
from app.infra.repositories.report_repository import ReportRepository
from app.services.ensemble_service import average_probabilities
from app.services.experiment_service import (
    ExperimentContext,
    ExperimentResult,
    metric_record,
    prepare_context,
    run_parent,
    run_prune_and_tune,
)

logger = logging.getLogger(__name__)

PRUNE_LABELS = {PruneMode.RANDOM: "R", PruneMode.ANTI_RANDOM_PAIRS: "AR"}
TUNE_LABELS = {ScheduleKind.CONSTANT: "FT", ScheduleKind.ONE_CYCLE: "1C"}

Cell = Tuple[str, RunConfig, Dict]


def sweep_cells(config: RunConfig, axis: AblationAxis) -> Iterator[Cell]:
    """(cell id, cell config, record extras) for the sparsity, granularity and prune-tune axes."""
    base = {"prune_mode": PruneMode.RANDOM}
    if axis == AblationAxis.SPARSITY:
        for s in config.sparsities:
            yield (f"sparsity={s:g}", config.model_copy(update={**base, "sparsity": s,
                                                                "granularity": Granularity.CONNECTION}),
                   {"axis": axis.value, "sparsity": s})
    elif axis == AblationAxis.GRANULARITY:
        for granularity in Granularity:
            for s in config.sparsities:
                yield (f"{granularity.value}@{s:g}",
                       config.model_copy(update={**base, "sparsity": s, "granularity": granularity}),
                       {"axis": axis.value, "granularity": granularity.value, "sparsity": s})
    elif axis == AblationAxis.PRUNE_TUNE:
        for mode, prune_label in PRUNE_LABELS.items():
            for tuning, tune_label in TUNE_LABELS.items():
                update = {"prune_mode": mode, "tuning": tuning, "num_children": 2, "sparsity": 0.5,
                          "granularity": Granularity.CONNECTION}
                yield (f"{prune_label}+{tune_label}", config.model_copy(update=update),
                       {"axis": axis.value, "pruning": prune_label, "tuning": tune_label})
    else:
        raise ValueError(f"{axis.value} is not a per-cell sweep")


def _ablation_record(record: ReportRecord, member_id: str) -> ReportRecord:
    return record.model_copy(update={"phase": Phase.ABLATION.value, "member_id": member_id})


def _run_cells(ctx: ExperimentContext, axis: AblationAxis, seed: int) -> None:
    parent, parent_log, _ = run_parent(ctx, seed)
    for cell_id, cell_config, extra in sweep_cells(ctx.config, axis):
        logger.info(f"Ablation cell {cell_id} (seed {seed})")
        _, _, ensemble = run_prune_and_tune(ctx, parent, parent_log, seed, cell_config,
                                            emit_members=False, extra=extra)
        ctx.emit(_ablation_record(ensemble, cell_id))


def _run_ensemble_sizes(ctx: ExperimentContext, seed: int) -> None:
    """One pool of max(size) children; ensemble k averages the first k of them."""
    config = ctx.config
    sizes = sorted(set(config.ensemble_sizes))
    parent, parent_log, _ = run_parent(ctx, seed)
    pool = config.model_copy(update={"num_children": sizes[-1], "track_tuning_epochs": False})
    _, member_probs, _ = run_prune_and_tune(ctx, parent, parent_log, seed, pool, emit_members=False)
    for k in sizes:
        probs = average_probabilities(member_probs[:k])
        ctx.emit(metric_record(ctx, Phase.ABLATION, f"size-{k}", probs, seed,
                               config.parent_epochs + k * config.child_epochs,
                               extra={"axis": AblationAxis.ENSEMBLE_SIZE.value, "ensemble_size": k}))


def summarize_cells(records: Sequence[ReportRecord]) -> List[ReportRecord]:
    """Mean and standard error of accuracy per cell over seeds."""
    cells: "OrderedDict[str, List[ReportRecord]]" = OrderedDict()
    for record in records:
        if record.phase == Phase.ABLATION.value:
            cells.setdefault(record.member_id, []).append(record)
    summaries = []
    for cell_id, rows in cells.items():
        acc = np.array([r.accuracy for r in rows], dtype=np.float64)
        stderr = float(acc.std(ddof=1) / math.sqrt(len(acc))) if len(acc) > 1 else 0.0
        summaries.append(ReportRecord(
            phase=Phase.SUMMARY, member_id=cell_id, accuracy=float(acc.mean()),
            nll=float(np.mean([r.nll for r in rows])), ece=float(np.mean([r.ece for r in rows])),
            epochs=rows[0].epochs, extra={**rows[0].extra, "trials": len(rows), "accuracy_stderr": stderr},
        ))
    return summaries


def size_trend(summaries: Sequence[ReportRecord]) -> Optional[ReportRecord]:
    """Spearman correlation between ensemble size and mean accuracy."""
    points = [(r.extra["ensemble_size"], r.accuracy) for r in summaries if "ensemble_size" in r.extra]
    if len(points) < 2:
        return None
    sizes, accuracies = zip(*points)
    rho, p_value = stats.spearmanr(sizes, accuracies)
    return ReportRecord(phase=Phase.SUMMARY, member_id="ensemble-size-trend",
                        extra={"spearman_rho": float(rho) if np.isfinite(rho) else None,
                               "p_value": float(p_value) if np.isfinite(p_value) else None,
                               "sizes": list(sizes)})


def run_ablation(config: RunConfig, axis=None, reports: Optional[ReportRepository] = None,
                 train: Optional[Dataset] = None, test: Optional[Dataset] = None) -> ExperimentResult:
    axis = AblationAxis(axis or config.ablation_axis)
    ctx = prepare_context(config, reports, train, test)
    first = len(ctx.reports.records)
    for seed in config.run_seeds:
        logger.info(f"Ablation over {axis.value}, seed {seed}")
        if axis == AblationAxis.ENSEMBLE_SIZE:
            _run_ensemble_sizes(ctx, seed)
        else:
            _run_cells(ctx, axis, seed)

    summaries = summarize_cells(ctx.reports.records[first:])
    if len(config.run_seeds) > 1:
        for record in summaries:
            ctx.emit(record)
    if axis == AblationAxis.ENSEMBLE_SIZE:
        trend = size_trend(summaries)
        if trend is not None:
            ctx.emit(trend)
    return ExperimentResult(list(ctx.reports.records[first:]))
