"""integrated-abundance entry point."""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from integrated_abundance import __version__
from integrated_abundance.exceptions import (
    ConfigurationError,
    ConvergenceError,
    DatasetError,
    InitializationError,
    StorageError,
)

from .commands import COMMANDS
from .config import Settings

logger = logging.getLogger(__name__)

LOG_FILE = "integrated-abundance.log"
HANDLER_NAME = "integrated-abundance"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_STORAGE = 4

EPILOG = """
Examples:
  integrated-abundance simulate --scenario grid:17 --seed 42 --out data/g17
  integrated-abundance fit --data data/g17 --variant ACV --out fits/g17
  integrated-abundance study grid --replicates 10 --workers 4 --out studies/grid
  integrated-abundance merge --out studies/grid shards/a shards/b
  integrated-abundance calibrate --replicates 200 --out calib

Exit codes:
  0  success
  2  invalid data, settings or initialization
  3  not converged (fit) or rank uniformity rejected (calibrate --strict)
  4  file could not be read or written

Environment:
  IABUND_WORKERS, IABUND_LOG_DIR, IABUND_LOG_LEVEL (or a .env file)
"""


def setup_logging(settings: Settings) -> None:
    """Configure the root logger: stdout always, a log file when IABUND_LOG_DIR is set."""
    formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    level = getattr(logging, settings.log_level.upper(), logging.INFO)

    root = logging.getLogger()
    root.setLevel(level)
    # Replace only the handlers a previous call installed
    for handler in [h for h in root.handlers if h.get_name() == HANDLER_NAME]:
        root.removeHandler(handler)
        handler.close()

    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if settings.log_dir is not None:
        settings.log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(settings.log_dir / LOG_FILE))

    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        handler.set_name(HANDLER_NAME)
        root.addHandler(handler)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="integrated-abundance",
        description="Estimate animal abundance from acoustic detections, validated calls and point counts",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one sub-command and map failures to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = Settings()
    except ValidationError as e:
        print(ConfigurationError.from_validation(e, "environment"), file=sys.stderr)
        return EXIT_INPUT
    setup_logging(settings)

    try:
        return args.handler(args, settings)
    except (DatasetError, ConfigurationError, InitializationError) as e:
        logger.error(f"[{args.command}] {e}")
        return EXIT_INPUT
    except ConvergenceError as e:
        logger.error(f"[{args.command}] {e}")
        return EXIT_NOT_CONVERGED
    except (StorageError, OSError) as e:
        logger.error(f"[{args.command}] {e}")
        return EXIT_STORAGE
    except KeyboardInterrupt:
        logger.warning(f"[{args.command}] interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
