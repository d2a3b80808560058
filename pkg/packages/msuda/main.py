"""
msuda command-line application: synthetic data, training, evaluation and weight dumps
"""

import logging
import sys

import click
from click.core import ParameterSource
from dotenv import load_dotenv
from pydantic import ValidationError
from pydantic_settings import SettingsError

from commands.evaluate import evaluate
from commands.synth import synth
from commands.train import train
from commands.weights import weights
from models.config_models import LOG_LEVELS
from utils.errors import ConfigurationError, MSUDAError
from utils.logging_config import configure_logging

logger = logging.getLogger(__name__)

__version__ = "1.0.0"


# ============================================================================
# UNIFIED ERROR HANDLER
# ============================================================================

class MSUDAGroup(click.Group):
    """Maps toolkit errors to their exit codes for every subcommand"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except MSUDAError as e:
            logger.error(f"❌ {type(e).__name__}: {e.message}")
            click.echo(f"Error: {e.message}", err=True)
            ctx.exit(e.exit_code)
        except (ValidationError, SettingsError) as e:
            logger.error(f"❌ Invalid configuration: {e}")
            click.echo(f"Error: invalid configuration\n{e}", err=True)
            ctx.exit(ConfigurationError.exit_code)


@click.group(cls=MSUDAGroup)
@click.version_option(__version__, prog_name="msuda")
@click.option("--log-level", envvar="MSUDA_LOG_LEVEL", default="INFO", show_default=True,
              type=click.Choice(LOG_LEVELS, case_sensitive=False))
@click.option("--json-logs/--console-logs", envvar="MSUDA_JSON_LOGS", default=False,
              help="Render log records as JSON lines")
@click.pass_context
def cli(ctx: click.Context, log_level: str, json_logs: bool):
    """Multi-source unsupervised domain adaptation toolkit"""
    load_dotenv()
    configure_logging(log_level.upper(), json_logs)

    # Explicit flags outrank a run config's logging keys
    ctx.ensure_object(dict)
    ctx.obj["logging_overrides"] = {
        name: value
        for name, value in (("log_level", log_level.upper()), ("json_logs", json_logs))
        if ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE
    }


# Register subcommands
cli.add_command(synth)
cli.add_command(train)
cli.add_command(evaluate)
cli.add_command(weights)


if __name__ == "__main__":
    sys.exit(cli())
