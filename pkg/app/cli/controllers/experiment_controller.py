import argparse

from app.cli.common import open_reports, print_records, resolve_config
from app.domain.dtos.run_config import AblationAxis
from app.services.ablation_service import run_ablation
from app.services.experiment_service import run_experiment


def experiment_command(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    result = run_experiment(config, open_reports(config))
    print_records(result.records)
    return 0


def ablation_command(args: argparse.Namespace) -> int:
    config = resolve_config(args, [f"ablation_axis={args.axis}"] if args.axis else [])
    result = run_ablation(config, reports=open_reports(config))
    print_records(result.records)
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("experiment", parents=[common],
                                   help="parent, children, tuning and evaluation end to end")
    parser.set_defaults(handler=experiment_command)

    parser = subparsers.add_parser("ablation", parents=[common], help="sweep one axis around a shared parent")
    parser.add_argument("--axis", choices=[a.value for a in AblationAxis])
    parser.set_defaults(handler=ablation_command)
