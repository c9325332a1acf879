import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from app.cli.router import build_parser
from app.core.errors import PatError
from app.core.logging import configure_logging

logger = logging.getLogger("app.main")

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def exit_status(error: BaseException) -> int:
    if isinstance(error, PatError):
        return error.exit_code
    if isinstance(error, ValidationError):
        return EXIT_CONFIG
    if isinstance(error, FloatingPointError):
        return EXIT_NUMERIC
    if isinstance(error, OSError):
        return EXIT_IO
    raise error


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args) or 0
    except (PatError, ValidationError, FloatingPointError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return exit_status(e)


if __name__ == "__main__":
    sys.exit(main())
