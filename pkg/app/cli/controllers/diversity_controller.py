import argparse

import numpy as np

from app.cli.common import open_reports, print_records, resolve_config
from app.core.errors import ConfigError
from app.domain.dtos.report import Phase, ReportRecord
from app.infra.repositories.checkpoint_repository import load_checkpoint
from app.services.diversity import DiversityMeasure, pairwise_matrix
from app.services.experiment_service import predict_test_set, prepare_context


def diversity_command(args: argparse.Namespace) -> int:
    """Pairwise diversity matrix and mean for each requested measure."""
    if len(args.members) < 2:
        raise ConfigError("diversity needs at least two --members")
    config = resolve_config(args)
    reports = open_reports(config)
    ctx = prepare_context(config, reports)
    member_probs = [predict_test_set(ctx, load_checkpoint(path).net) for path in args.members]
    measures = list(DiversityMeasure) if args.measure == "all" else [DiversityMeasure(args.measure)]
    for measure in measures:
        result = pairwise_matrix(member_probs, measure)
        ctx.emit(ReportRecord(phase=Phase.DIVERSITY, member_id=f"d_{measure.value}", seed=config.seed,
                              extra={"measure": measure.value, "mean": result.mean,
                                     "members": list(args.members), "matrix": result.matrix.tolist()}))
        print(f"d_{measure.value} matrix:")
        print(np.array2string(result.matrix, precision=4, suppress_small=True))
    print_records(reports.records)
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("diversity", parents=[common], help="pairwise member diversity")
    parser.add_argument("--members", nargs="+", required=True)
    parser.add_argument("--measure", choices=[m.value for m in DiversityMeasure] + ["all"], default="all")
    parser.set_defaults(handler=diversity_command)
