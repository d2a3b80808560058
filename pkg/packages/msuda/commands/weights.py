"""
weights: dump per-instance source weights of a checkpoint on a corpus
"""

import logging
from pathlib import Path
from typing import Tuple

import click
import numpy as np
import pandas as pd

from models.config_models import WeightMode
from models.data_models import SentimentLabel
from services.checkpoint_service import load_checkpoint
from services.corpus_service import load_corpus
from services.weighting_service import predict_corpus

logger = logging.getLogger(__name__)


@click.command("weights")
@click.option("--checkpoint", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--corpus", "corpus_files", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              multiple=True, required=True)
@click.option("--weight-mode", type=click.Choice([m.value for m in WeightMode]), default=WeightMode.SHARED.value,
              show_default=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Tab-separated output file")
def weights(checkpoint: Path, corpus_files: Tuple[Path, ...], weight_mode: str, out_file: Path):
    """Write instance_id, one weight column per source, predicted label and confidence"""
    loaded = load_checkpoint(checkpoint)
    corpus = load_corpus(list(corpus_files), loaded.vocabulary, "weights", loaded.model.num_sources)
    predictions = predict_corpus(loaded.model, corpus.features, WeightMode(weight_mode))

    table = pd.DataFrame(predictions.weights, columns=[f"w_{name}" for name in loaded.source_names])
    table.insert(0, "instance_id", np.arange(len(corpus)))
    table["predicted_label"] = [SentimentLabel(int(label)).text for label in predictions.labels]
    table["confidence"] = predictions.confidence

    out_file.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_file, sep="\t", index=False, float_format="%.17g")
    logger.info(f"💾 Wrote weights for {len(table)} instances to {out_file}")
    click.echo(f"{len(table)} instances\t{out_file}")
