import logging
from pathlib import Path
from typing import Dict, Iterable, Optional

from pydantic import ValidationError

from app.core.errors import ConfigError, DataIOError
from app.domain.dtos.run_config import RunConfig

logger = logging.getLogger(__name__)


def parse_key_values(text: str, source: str = "<config>") -> Dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment, blank lines are skipped."""
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {line!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def parse_overrides(overrides: Iterable[str]) -> Dict[str, str]:
    return parse_key_values("\n".join(overrides), "--set")


def load_run_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """RunConfig from an optional file plus ``key=value`` overrides applied on top."""
    values: Dict[str, str] = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"{path}: cannot read config: {e}") from e
        values.update(parse_key_values(text, str(path)))
    values.update(parse_overrides(overrides))
    try:
        config = RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration{f' in {path}' if path else ''}: {e}") from e
    logger.debug(f"Loaded run config {config.model_dump_json()}")
    return config
