import argparse
from typing import Iterable, List

from app.core.config_file import load_run_config
from app.domain.dtos.report import ReportRecord
from app.domain.dtos.run_config import RunConfig
from app.infra.repositories.report_repository import ReportRepository


def common_parser() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="flat key=value run configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--report", help="JSON-lines report file (appended)")
    parser.add_argument("--workers", type=int, help="worker threads for child tuning")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    return parser


def resolve_config(args: argparse.Namespace, extra: Iterable[str] = ()) -> RunConfig:
    overrides: List[str] = list(args.overrides)
    if args.report:
        overrides.append(f"report_path={args.report}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    overrides.extend(extra)
    return load_run_config(args.config, overrides)


def open_reports(config: RunConfig) -> ReportRepository:
    return ReportRepository(config.report_path)


def print_records(records: Iterable[ReportRecord]) -> None:
    for record in records:
        print(record.summary_line())
