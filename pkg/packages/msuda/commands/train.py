"""
train: WS-UDA, or 2ST-UDA on top of a new or existing WS-UDA checkpoint
"""

import logging
from pathlib import Path
from typing import Optional

import click

from models.config_models import Framework, RunConfig, ValidationMode, WeightMode
from services.experiment_orchestrator import ExperimentOrchestrator
from utils.logging_config import configure_logging

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--config", "config_file", type=click.Path(dir_okay=False, path_type=Path),
              help="JSON run configuration")
@click.option("--framework", type=click.Choice([f.value for f in Framework]))
@click.option("--target", help="Target domain name")
@click.option("--seed", type=int)
@click.option("--weight-mode", type=click.Choice([m.value for m in WeightMode]))
@click.option("--validation", type=click.Choice([m.value for m in ValidationMode]))
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--wsuda-checkpoint", type=click.Path(file_okay=False, path_type=Path),
              help="Existing WS-UDA checkpoint to start 2ST-UDA from")
@click.pass_context
def train(ctx: click.Context, config_file: Optional[Path], **flags):
    """Train on the configured domains; writes checkpoints, metrics and a report under --out"""
    overrides = (ctx.find_root().obj or {}).get("logging_overrides", {})
    cfg = RunConfig.load(config_file, **overrides, **flags)
    configure_logging(cfg.log_level, cfg.json_logs)
    logger.debug(f"Logging at {cfg.log_level} (json={cfg.json_logs})")
    report = ExperimentOrchestrator(cfg).run()

    for phase in ("wsuda", "2studa"):
        test = report.get(phase, {}).get("test")
        if test:
            click.echo(f"{phase}\taccuracy={test['accuracy']:.4f}\tn={test['num_examples']}")
    click.echo(f"outputs\t{cfg.out_dir}")
