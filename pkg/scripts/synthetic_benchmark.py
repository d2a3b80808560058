import os
import sys

import click
import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "packages", "msuda"))

from models.config_models import ModelConfig, PseudoLabelConfig, SynthSpec, TrainConfig, WeightMode  # noqa: E402
from services.network import SharedPrivateModel  # noqa: E402
from services.self_training_service import train_2studa  # noqa: E402
from services.synthetic_service import generate_dataset  # noqa: E402
from services.training_service import TargetValidator, train_wsuda  # noqa: E402
from services.weighting_service import accuracy, predict_corpus, predict_target_path  # noqa: E402
from utils.logging_config import configure_logging  # noqa: E402


def run_seed(seed, hidden_dim, feature_dim, max_epochs):
    """
    Train WS-UDA then 2ST-UDA on one synthetic draw and score every predictor
    against the sealed target labels.
    """
    spec = SynthSpec(seed=seed)
    bundle, vocabulary = generate_dataset(spec)
    labels = bundle.sealed_target_labels
    val = bundle.target.subset(np.arange(200))
    val.labels = labels[:200]

    model = SharedPrivateModel(
        ModelConfig(input_dim=len(vocabulary), hidden_dim=hidden_dim, feature_dim=feature_dim,
                    num_sources=spec.num_sources),
        rng=np.random.default_rng(seed),
    )
    cfg = TrainConfig(seed=seed, max_epochs=max_epochs, lr=1e-3)
    result = train_wsuda(model, bundle, cfg, validator=TargetValidator(val))

    x = bundle.target.features
    row = {"seed": seed, "epochs": len(result.history)}
    for mode in WeightMode:
        row[f"weighted_{mode.value}"] = accuracy(predict_corpus(model, x, mode).combined, labels)
    predictions = predict_corpus(model, x, uniform=True)
    row["uniform"] = accuracy(predictions.combined, labels)
    for j in range(spec.num_sources):
        row[f"source{j}"] = accuracy(predictions.per_source[j], labels)
    row["shared_dom_acc"] = result.history[-1].shared_dom_acc if result.history else None
    row["private_dom_acc"] = result.history[-1].private_dom_acc if result.history else None

    two_stage = train_2studa(model, bundle.target, PseudoLabelConfig(), cfg, reference_labels=labels)
    row["target_path"] = accuracy(predict_target_path(model, x), labels)
    row["pseudo_labels"] = two_stage.state.accumulated
    row["pseudo_label_acc"] = two_stage.rounds[-1].accuracy if two_stage.rounds else None
    return row


@click.command()
@click.option("--seeds", "num_seeds", type=click.IntRange(min=1), default=5, show_default=True,
              help="Number of synthetic draws, seeds 0..N-1")
@click.option("--max-epochs", type=click.IntRange(min=0), default=15, show_default=True)
def main(num_seeds: int, max_epochs: int):
    """WS-UDA and 2ST-UDA accuracies over several synthetic draws"""
    configure_logging("WARNING")

    rows = []
    for seed in range(num_seeds):
        click.echo(f"Running seed {seed}...")
        rows.append(run_seed(seed, hidden_dim=64, feature_dim=16, max_epochs=max_epochs))

    table = pd.DataFrame(rows)
    click.echo(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    click.echo("\nMean over seeds:")
    click.echo(table.drop(columns=["seed"]).mean().to_string(float_format=lambda v: f"{v:.4f}"))


if __name__ == "__main__":
    main()
