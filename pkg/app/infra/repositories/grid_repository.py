import csv
import json
import logging
from pathlib import Path

import numpy as np

from app.core.errors import DataIOError
from app.services.landscape import LossGrid

logger = logging.getLogger(__name__)


def save_grid(path, grid: LossGrid) -> Path:
    """Comma-separated matrix: '#' metadata lines, then a row of alpha
    coordinates, then one row per beta starting with the beta coordinate."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            for key, value in grid.metadata.items():
                f.write(f"# {key}={json.dumps(value)}\n")
            writer = csv.writer(f)
            writer.writerow(["beta\\alpha"] + [repr(float(a)) for a in grid.alphas])
            for j, beta in enumerate(grid.betas):
                writer.writerow([repr(float(beta))] + [repr(float(v)) for v in grid.values[:, j]])
    except OSError as e:
        logger.error(f"Failed to write landscape grid {path}: {e}")
        raise DataIOError(f"{path}: cannot write grid: {e}") from e
    logger.info(f"Saved {grid.resolution}x{grid.resolution} landscape grid to {path}")
    return path


def load_grid(path) -> LossGrid:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataIOError(f"{path}: cannot read grid: {e}") from e
    metadata = {}
    rows = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            metadata[key] = json.loads(value)
        elif line.strip():
            rows.append(next(csv.reader([line])))
    if len(rows) < 2:
        raise DataIOError(f"{path}: no grid rows")
    alphas = np.array([float(v) for v in rows[0][1:]])
    betas = np.array([float(r[0]) for r in rows[1:]])
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).T
    return LossGrid(alphas, betas, values, metadata)
