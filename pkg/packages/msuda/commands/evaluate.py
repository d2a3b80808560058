"""
eval: accuracy of a checkpoint on a labeled corpus, with the per-source breakdown
"""

import logging
from pathlib import Path
from typing import Optional, Tuple

import click
import pandas as pd

from models.config_models import WeightMode
from services.checkpoint_service import load_checkpoint, read_vocabulary
from services.corpus_service import load_corpus
from services.experiment_orchestrator import evaluate_model
from services.metrics_service import write_json
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)


@click.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--corpus", "corpus_files", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              multiple=True, required=True, help="Corpus file(s); repeat for several")
@click.option("--labels", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Label sidecar for corpora without inline labels")
@click.option("--weight-mode", type=click.Choice([m.value for m in WeightMode]), default=WeightMode.SHARED.value,
              show_default=True)
@click.option("--path", "path", type=click.Choice(["ensemble", "target"]), default="ensemble", show_default=True,
              help="Weighted source ensemble, or C(E_s, E_t) for 2ST-UDA checkpoints")
@click.option("--vocabulary", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Vocabulary the corpus is expected to use; must match the checkpoint")
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), help="Write the report as JSON")
def evaluate(checkpoint: Path, corpus_files: Tuple[Path, ...], labels: Optional[Path], weight_mode: str, path: str,
             vocabulary: Optional[Path], out_file: Optional[Path]):
    """Report accuracy of a trained checkpoint"""
    loaded = load_checkpoint(checkpoint)
    if vocabulary is not None:
        expected = read_vocabulary(vocabulary)
        if expected.sha256 != loaded.manifest.vocabulary_sha256:
            raise ConfigurationError(
                f"Vocabulary {vocabulary} (sha256 {expected.sha256[:12]}…) differs from the one the checkpoint "
                f"was trained with ({loaded.manifest.vocabulary_sha256[:12]}…); features would not line up"
            )

    corpus = load_corpus(list(corpus_files), loaded.vocabulary, "eval", loaded.model.num_sources, labels)
    report = evaluate_model(loaded.model, corpus, loaded.source_names, WeightMode(weight_mode), path)

    rows = [{"predictor": f"source:{name}", "accuracy": acc} for name, acc in report.per_source.items()]
    rows.append({"predictor": "uniform ensemble", "accuracy": report.uniform_ensemble})
    rows.append({"predictor": f"weighted ensemble ({report.weight_mode})", "accuracy": report.weighted_ensemble})
    if report.target_path is not None:
        rows.append({"predictor": "target path", "accuracy": report.target_path})
    click.echo(pd.DataFrame(rows).to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    click.echo(f"accuracy ({report.path}): {report.accuracy:.4f} on {report.num_examples} examples")

    if out_file is not None:
        write_json(out_file, report)
