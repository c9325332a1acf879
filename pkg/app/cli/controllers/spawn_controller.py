import argparse
from pathlib import Path

from app.cli.common import resolve_config
from app.domain.dtos.run_config import PruneMode
from app.domain.masks import Granularity, MaskScope
from app.infra.repositories.checkpoint_repository import load_checkpoint, save_checkpoint
from app.services.ensemble_service import spawn_children


def spawn_command(args: argparse.Namespace) -> int:
    """Write one masked child checkpoint per ensemble member."""
    extra = []
    for key, value in (("prune_mode", args.mode), ("num_children", args.n), ("sparsity", args.sparsity),
                       ("granularity", args.granularity), ("scope", args.scope)):
        if value is not None:
            extra.append(f"{key}={value}")
    config = resolve_config(args, extra)
    parent = load_checkpoint(args.parent)
    state = spawn_children(parent.net, config.prune_mode, config.num_children, config.sparsity,
                           config.granularity, config.scope, config.seed,
                           config.prune_output_layer, config.prune_biases)
    parent_last_lr = parent.extra.get("training_log", {}).get("last_lr")
    out_dir = Path(args.out_dir)
    for child in state.children:
        path = save_checkpoint(out_dir / f"{child.member_id}.ckpt", child.net, child.seed, {
            "kind": "child",
            "index": child.index,
            "run_seed": config.seed,
            "prune_mode": PruneMode(config.prune_mode).value,
            "parent_last_lr": parent_last_lr,
        })
        print(f"{path}  kept={child.mask.kept}/{len(child.mask)}  sparsity={child.mask.sparsity:.4f}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("spawn", parents=[common], help="prune the parent into child checkpoints")
    parser.add_argument("--parent", required=True)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--mode", choices=[m.value for m in PruneMode])
    parser.add_argument("--n", type=int)
    parser.add_argument("--sparsity", type=float)
    parser.add_argument("--granularity", choices=[g.value for g in Granularity])
    parser.add_argument("--scope", choices=[s.value for s in MaskScope])
    parser.set_defaults(handler=spawn_command)
