import argparse

from app.cli.common import open_reports, print_records, resolve_config
from app.infra.repositories.checkpoint_repository import save_checkpoint
from app.services.experiment_service import prepare_context, run_parent


def train_parent_command(args: argparse.Namespace) -> int:
    """Train the parent network and write it as a checkpoint."""
    config = resolve_config(args)
    reports = open_reports(config)
    ctx = prepare_context(config, reports)
    parent, log, _ = run_parent(ctx, config.seed)
    save_checkpoint(args.out, parent, config.seed, {"kind": "parent", "training_log": log.model_dump()})
    print_records(reports.records)
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("train-parent", parents=[common], help="train the parent network")
    parser.add_argument("--out", required=True, help="parent checkpoint path")
    parser.set_defaults(handler=train_parent_command)
