import functools
import logging

import click

from app.exceptions import ConfigurationError, DataError, NumericalError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigurationError, DataError)):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    raise exc


def guarded(fn):
    """Turn the project's exceptions into exit codes, reporting them on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            rv = fn(*args, **kwargs)
        except (ConfigurationError, DataError, NumericalError) as e:
            click.echo(f"error: {e}", err=True)
            return exit_code_for(e)
        return EXIT_OK if rv is None else rv

    return wrapper


def seed_overrides(seed):
    if seed is None:
        return {}
    return {"graph.seed": seed, "problem.seed": seed, "solver.seed": seed}
