import sys
from typing import List, Optional

from pydantic import ValidationError

from .cli.commands import COMMANDS, config_from_args, parse
from .core.config import settings
from .core.errors import VstoxxLabError
from .core.logging import StructuredLogger

# Initialize logger
logger = StructuredLogger("main")

EXIT_VALIDATION = 2
EXIT_DATA = 3


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = parse(argv)
    logger.debug("Starting", app_name=settings.app_name, version=settings.app_version, command=args.command)
    try:
        config = config_from_args(args)
        return COMMANDS[args.command](config)
    except ValidationError as e:
        logger.error("Invalid configuration or input", command=args.command, errors=e.errors(include_url=False))
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        logger.error("Missing input", command=args.command, error=str(e))
        return EXIT_DATA
    except VstoxxLabError as e:
        logger.error("Command failed", command=args.command, error_type=type(e).__name__, error=str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
