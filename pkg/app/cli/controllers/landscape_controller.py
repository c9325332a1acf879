import argparse
from pathlib import Path

from app.cli.common import open_reports, print_records, resolve_config
from app.core.seeding import derive_seed
from app.domain.dataset import take_subset
from app.domain.dtos.report import Phase, ReportRecord
from app.infra.repositories.checkpoint_repository import load_checkpoint
from app.infra.repositories.grid_repository import save_grid
from app.services.experiment_service import prepare_context
from app.services.landscape import filter_normalized_direction, loss_grid


def landscape_command(args: argparse.Namespace) -> int:
    """Loss surface around a checkpoint on a seeded training subset."""
    config = resolve_config(args)
    reports = open_reports(config)
    ctx = prepare_context(config, reports)
    net = load_checkpoint(args.model).net
    subset = take_subset(ctx.train, config.landscape_subset, derive_seed(config.seed, "landscape-subset"))
    delta = filter_normalized_direction(net, derive_seed(config.seed, "landscape-delta"))
    rho = filter_normalized_direction(net, derive_seed(config.seed, "landscape-rho"))
    grid = loss_grid(net, subset, delta, rho, config.landscape_range, config.landscape_range,
                     config.landscape_resolution)
    grid.metadata.update({"seed": config.seed, "model": str(args.model)})
    center = grid.center
    save_grid(args.out, grid)
    ctx.emit(ReportRecord(phase=Phase.LANDSCAPE, member_id=Path(args.model).stem, seed=config.seed,
                          extra={"center": center, "min": float(grid.values.min()),
                                 "max": float(grid.values.max()), "grid": str(args.out)}))
    print_records(reports.records)
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("landscape", parents=[common], help="2-D loss surface around a checkpoint")
    parser.add_argument("--model", required=True)
    parser.add_argument("--out", required=True, help="comma-separated grid file")
    parser.set_defaults(handler=landscape_command)
