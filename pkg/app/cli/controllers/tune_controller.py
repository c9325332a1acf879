import argparse
from pathlib import Path

from app.cli.common import open_reports, print_records, resolve_config
from app.core.errors import ConfigError
from app.domain.dtos.report import Phase
from app.infra.repositories.checkpoint_repository import load_checkpoint, save_checkpoint
from app.services.ensemble_service import tune_child
from app.services.experiment_service import metric_record, predict_test_set, prepare_context, tuning_schedule
from app.services.optimizers import build_optimizer


def tune_command(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    child = load_checkpoint(args.child)
    if child.mask is None:
        raise ConfigError(f"{args.child} has no mask; spawn children before tuning")
    reports = open_reports(config)
    ctx = prepare_context(config, reports)
    optimizer = build_optimizer(config.tune_optimizer, config.momentum, config.weight_decay)
    net, log = tune_child(child.net, child.mask, ctx.train, config.child_epochs,
                          tuning_schedule(config, child.extra.get("parent_last_lr")), optimizer, child.seed,
                          config.bagging_fraction, config.bagging_replace, config.batch_size, ctx.policy,
                          desc=Path(args.child).stem)
    save_checkpoint(args.out, net, child.seed, {**child.extra, "tuning_log": log.model_dump()})
    ctx.emit(metric_record(ctx, Phase.CHILD, Path(args.out).stem, predict_test_set(ctx, net), child.seed,
                           config.child_epochs, extra={"sparsity": child.mask.sparsity}))
    print_records(reports.records)
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("tune", parents=[common], help="tune one child checkpoint")
    parser.add_argument("--child", required=True)
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=tune_command)
