"""
synth: write a synthetic multi-domain benchmark in the corpus format
"""

import logging
from pathlib import Path
from typing import Optional

import click

from models.config_models import SynthSpec
from services.metrics_service import read_json
from services.synthetic_service import write_synthetic

logger = logging.getLogger(__name__)


def _signs(ctx, param, value: Optional[str]):
    if value is None:
        return None
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated ±1 values, got {value!r}")


@click.command("synth")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=Path("data/synth"),
              show_default=True, help="Directory for the generated corpora")
@click.option("--spec", "spec_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file with generator settings; flags override it")
@click.option("--vocab-size", type=int)
@click.option("--shared-size", type=int)
@click.option("--private-size", type=int)
@click.option("--num-sources", type=int)
@click.option("--source-signs", callback=_signs, help="Private polarity sign per source, e.g. 1,-1,-1")
@click.option("--target-sign", type=click.Choice(["1", "-1"]))
@click.option("--docs-per-domain", type=int)
@click.option("--mean-tokens", type=float)
@click.option("--noise-rate", type=float)
@click.option("--private-weight", type=float)
@click.option("--shared-purity", type=float)
@click.option("--target-affinity", type=float)
@click.option("--seed", type=int)
def synth(out_dir: Path, spec_file: Optional[Path], target_sign: Optional[str], **flags):
    """Generate K source corpora, an unlabeled target corpus and its sealed labels"""
    settings = read_json(spec_file) if spec_file else {}
    settings.update({key: value for key, value in flags.items() if value is not None})
    if target_sign is not None:
        settings["target_sign"] = int(target_sign)

    spec = SynthSpec.model_validate(settings)
    written = write_synthetic(spec, out_dir)
    for name, path in written.items():
        click.echo(f"{name}\t{path}")
