"""
Shared fixtures: seeded generators, a tiny architecture and a small synthetic benchmark
"""

from pathlib import Path

import numpy as np
import pytest

from models.config_models import ModelConfig, SynthSpec, TrainConfig
from services.network import SharedPrivateModel
from services.synthetic_service import generate_dataset


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(input_dim=12, hidden_dim=8, feature_dim=4, num_sources=3)


@pytest.fixture
def tiny_model(tiny_config) -> SharedPrivateModel:
    return SharedPrivateModel(tiny_config, rng=np.random.default_rng(7))


@pytest.fixture
def small_spec() -> SynthSpec:
    return SynthSpec(
        vocab_size=60,
        shared_size=12,
        private_size=6,
        num_sources=3,
        docs_per_domain=60,
        mean_tokens=15,
        seed=3,
    )


@pytest.fixture
def small_bundle(small_spec):
    bundle, _ = generate_dataset(small_spec)
    return bundle


@pytest.fixture
def small_model_config(small_spec) -> ModelConfig:
    return ModelConfig(input_dim=small_spec.vocab_size, hidden_dim=16, feature_dim=8,
                       num_sources=small_spec.num_sources)


@pytest.fixture
def fast_train_config() -> TrainConfig:
    return TrainConfig(batch_size=8, lr=1e-2, n_critic=2, max_epochs=2, patience=2, seed=0, metrics_sample=40)


@pytest.fixture
def out_dir(tmp_path) -> Path:
    path = tmp_path / "out"
    path.mkdir()
    return path
