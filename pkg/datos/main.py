# main.py
import sys

import click
from dotenv import load_dotenv

from app.config import configure_logging, get_settings
from commands import oracle, run, selftest, sweep
from commands.common import EXIT_CONFIG

# Load .env from the working directory
load_dotenv()


@click.group()
@click.option("--log-level", default=None, help="Overrides DATOS_LOG_LEVEL.")
def cli(log_level):
    """Decentralized adaptive three-operator splitting experiments."""
    configure_logging(log_level or get_settings().log_level)


cli.add_command(run.command)
cli.add_command(sweep.command)
cli.add_command(oracle.command)
cli.add_command(selftest.command)


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="datos", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_CONFIG
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
