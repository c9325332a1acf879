from pathlib import Path

import pytest

from app.core.config_file import load_run_config
from app.domain.dtos.report import Phase, ReportRecord
from app.domain.dtos.run_config import AblationAxis, PruneMode, RunConfig, ScheduleKind
from app.domain.masks import Granularity
from app.services.ablation_service import run_ablation, size_trend, summarize_cells, sweep_cells


def _config(**overrides):
    values = dict(dataset="synthetic", parent_epochs=1, child_epochs=1, num_children=2, batch_size=32)
    values.update(overrides)
    return RunConfig(**values)


class TestSweepCells:
    def test_sparsity_axis(self):
        cells = list(sweep_cells(_config(sparsities=[0.1, 0.5]), AblationAxis.SPARSITY))
        assert [c[0] for c in cells] == ["sparsity=0.1", "sparsity=0.5"]
        assert [c[1].sparsity for c in cells] == [0.1, 0.5]

    def test_granularity_axis(self):
        cells = list(sweep_cells(_config(sparsities=[0.3]), AblationAxis.GRANULARITY))
        assert [c[0] for c in cells] == ["connection@0.3", "neuron@0.3"]
        assert cells[1][1].granularity == Granularity.NEURON

    def test_prune_tune_grid(self):
        cells = list(sweep_cells(_config(num_children=8, sparsity=0.3), AblationAxis.PRUNE_TUNE))
        assert [c[0] for c in cells] == ["R+FT", "R+1C", "AR+FT", "AR+1C"]
        for _, config, _ in cells:
            assert config.num_children == 2 and config.sparsity == 0.5
        assert cells[2][1].prune_mode == PruneMode.ANTI_RANDOM_PAIRS
        assert cells[1][1].tuning == ScheduleKind.ONE_CYCLE

    def test_ensemble_size_is_not_a_cell_sweep(self):
        with pytest.raises(ValueError):
            list(sweep_cells(_config(), AblationAxis.ENSEMBLE_SIZE))


class TestSummaries:
    def test_summarize_cells(self):
        records = [ReportRecord(phase=Phase.ABLATION, member_id="a", accuracy=acc, nll=1.0, ece=0.1, epochs=3)
                   for acc in (0.5, 0.7)]
        records.append(ReportRecord(phase=Phase.PARENT, member_id="parent", accuracy=0.1))
        summary, = summarize_cells(records)
        assert summary.member_id == "a"
        assert summary.accuracy == pytest.approx(0.6)
        assert summary.extra["trials"] == 2
        assert summary.extra["accuracy_stderr"] == pytest.approx(0.1)

    def test_size_trend(self):
        summaries = [ReportRecord(phase=Phase.SUMMARY, member_id=f"size-{k}", accuracy=acc,
                                  extra={"ensemble_size": k}) for k, acc in ((2, 0.5), (4, 0.55), (8, 0.6))]
        trend = size_trend(summaries)
        assert trend.extra["spearman_rho"] == pytest.approx(1.0)
        assert trend.extra["sizes"] == [2, 4, 8]

    def test_size_trend_needs_two_points(self):
        assert size_trend([ReportRecord(phase=Phase.SUMMARY, accuracy=0.5, extra={"ensemble_size": 2})]) is None


class TestRunAblation:
    def test_prune_tune_axis(self, synthetic_splits):
        result = run_ablation(_config(), AblationAxis.PRUNE_TUNE, train=synthetic_splits[0],
                              test=synthetic_splits[1])
        cells = [r.member_id for r in result.by_phase(Phase.ABLATION)]
        assert cells == ["R+FT", "R+1C", "AR+FT", "AR+1C"]
        assert len(result.by_phase(Phase.PARENT)) == 1

    def test_tracked_tuning_epochs_stay_out_of_cells(self, synthetic_splits):
        result = run_ablation(_config(track_tuning_epochs=True, child_epochs=2), AblationAxis.PRUNE_TUNE,
                              train=synthetic_splits[0], test=synthetic_splits[1])
        assert result.by_phase(Phase.ENSEMBLE) == []
        assert result.by_phase(Phase.CHILD) == []
        assert len(result.by_phase(Phase.ABLATION)) == 4

    def test_ensemble_size_axis(self, synthetic_splits):
        result = run_ablation(_config(ensemble_sizes=[1, 2], seeds=[0, 1]), "ensemble-size",
                              train=synthetic_splits[0], test=synthetic_splits[1])
        sizes = [r.member_id for r in result.by_phase(Phase.ABLATION)]
        assert sizes == ["size-1", "size-2", "size-1", "size-2"]
        summary_ids = [r.member_id for r in result.by_phase(Phase.SUMMARY)]
        assert summary_ids == ["size-1", "size-2", "ensemble-size-trend"]

    def test_axis_from_config(self, synthetic_splits):
        result = run_ablation(_config(ablation_axis="sparsity", sparsities=[0.5]),
                              train=synthetic_splits[0], test=synthetic_splits[1])
        assert [r.member_id for r in result.by_phase(Phase.ABLATION)] == ["sparsity=0.5"]
        assert result.by_phase(Phase.ABLATION)[0].extra["sparsity"] == 0.5


@pytest.mark.longrun
class TestSizeTrendOnCifar:
    def test_accuracy_grows_with_ensemble_size(self):
        path = Path(__file__).resolve().parent.parent / "configs" / "ablation.cfg"
        config = load_run_config(str(path), ["ensemble_sizes=2,4,8,16", "seeds=0,1,2,3,4", "report_path="])
        if not Path(config.data_dir).exists():
            pytest.skip(f"CIFAR-10 not found under {config.data_dir}")
        result = run_ablation(config, AblationAxis.ENSEMBLE_SIZE)
        trend = [r for r in result.by_phase(Phase.SUMMARY) if r.member_id == "ensemble-size-trend"][0]
        assert trend.extra["spearman_rho"] > 0
