import argparse

from app.cli.common import common_parser
from app.cli.controllers import (
    diversity_controller,
    eval_controller,
    experiment_controller,
    landscape_controller,
    spawn_controller,
    train_controller,
    tune_controller,
)

CONTROLLERS = [
    train_controller,
    spawn_controller,
    tune_controller,
    eval_controller,
    diversity_controller,
    landscape_controller,
    experiment_controller,
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pat", description="Prune-and-tune ensembles of small convolutional networks")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = common_parser()
    for controller in CONTROLLERS:
        controller.register(subparsers, common)
    return parser
