import argparse
from pathlib import Path

from app.cli.common import open_reports, print_records, resolve_config
from app.domain.dtos.report import Phase
from app.infra.repositories.checkpoint_repository import load_checkpoint
from app.services.ensemble_service import average_probabilities
from app.services.experiment_service import metric_record, predict_test_set, prepare_context

PHASE_BY_KIND = {"parent": Phase.PARENT, "child": Phase.CHILD}


def eval_command(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    reports = open_reports(config)
    ctx = prepare_context(config, reports)
    checkpoint = load_checkpoint(args.model)
    default = Phase.CHILD if checkpoint.mask is not None else Phase.PARENT
    phase = PHASE_BY_KIND.get(checkpoint.extra.get("kind"), default)
    ctx.emit(metric_record(ctx, phase, Path(args.model).stem, predict_test_set(ctx, checkpoint.net),
                           checkpoint.seed, None))
    print_records(reports.records)
    return 0


def ensemble_eval_command(args: argparse.Namespace) -> int:
    """Evaluate each member, then their averaged softmax."""
    config = resolve_config(args)
    reports = open_reports(config)
    ctx = prepare_context(config, reports)
    member_probs = []
    for path in args.members:
        checkpoint = load_checkpoint(path)
        probs = predict_test_set(ctx, checkpoint.net)
        member_probs.append(probs)
        ctx.emit(metric_record(ctx, Phase.CHILD, Path(path).stem, probs, checkpoint.seed, None))
    ctx.emit(metric_record(ctx, Phase.ENSEMBLE, "ensemble", average_probabilities(member_probs), config.seed,
                           None, extra={"members": len(member_probs)}))
    print_records(reports.records)
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("eval", parents=[common], help="evaluate one checkpoint on the test split")
    parser.add_argument("--model", required=True)
    parser.set_defaults(handler=eval_command)

    parser = subparsers.add_parser("ensemble-eval", parents=[common], help="evaluate an ensemble of checkpoints")
    parser.add_argument("--members", nargs="+", required=True)
    parser.set_defaults(handler=ensemble_eval_command)
