import logging
import sys
from typing import List, Optional

import click
from pydantic import ValidationError

from .api.commands import UnknownCommandError, cli
from .core.config import get_settings
from .core.errors import AdaptedOtError, MalformedInputError

PROG_NAME = "adapted-ot"

# Exit code for an unknown or missing command (sysexits EX_USAGE)
EXIT_USAGE = 64

logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None) -> None:
    """Configure logging to stderr, leaving stdout for results."""
    logging.basicConfig(
        level=(level or get_settings().LOG_LEVEL).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
        force=True,
    )


def dispatch(argv: List[str]) -> int:
    """Run one command line and return its exit code."""
    try:
        setup_logging()
    except ValidationError as e:
        click.echo(f"error: invalid settings: {e}", err=True)
        return MalformedInputError.exit_code

    if not argv:
        click.echo(f"Usage: {PROG_NAME} COMMAND [ARGS]...", err=True)
        click.echo(f"Try '{PROG_NAME} --help' for the list of commands.", err=True)
        return EXIT_USAGE

    try:
        rv = cli.main(args=argv, prog_name=PROG_NAME, standalone_mode=False)
    except UnknownCommandError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return MalformedInputError.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except AdaptedOtError as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"error: {e}", err=True)
        return e.exit_code

    return rv if isinstance(rv, int) else 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
