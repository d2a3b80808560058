"""
Shared-private architecture: forward paths, routing and parameter bookkeeping
"""

import numpy as np
import pytest
import scipy.sparse as sp

from services.network import TARGET, MLP, SharedPrivateModel
from utils.errors import ConfigurationError, DimensionError


class TestForwardPaths:

    def test_source_predictions_shape(self, tiny_model, rng):
        x = rng.random((5, 12))
        predictions = tiny_model.source_predictions(x)
        assert predictions.shape == (3, 5, 2)
        np.testing.assert_allclose(predictions.sum(axis=2), 1.0, atol=1e-12)

    def test_discriminator_covers_all_domains(self, tiny_model, rng):
        probs = tiny_model.discriminate(tiny_model.extract_shared(rng.random((4, 12))))
        assert probs.shape == (4, 4)

    def test_sparse_input_matches_dense(self, tiny_model, rng):
        x = rng.random((3, 12))
        x[x < 0.5] = 0.0
        np.testing.assert_array_equal(
            tiny_model.extract_shared(sp.csr_matrix(x)),
            tiny_model.extract_shared(x),
        )

    def test_wrong_width_rejected(self, tiny_model, rng):
        with pytest.raises(DimensionError):
            tiny_model.source_predictions(rng.random((3, 11)))

    def test_classify_checks_feature_width(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.classify(np.zeros((2, 4)), np.zeros((2, 5)))

    def test_extractors_end_in_relu(self, tiny_model, rng):
        assert np.all(tiny_model.extract_private(1, rng.normal(size=(6, 12))) >= 0)

    def test_mlp_needs_two_sizes(self):
        with pytest.raises(DimensionError):
            MLP([4], "broken", np.random.default_rng(0), final_activation=False)


class TestExtractors:

    def test_target_extractor_absent_by_default(self, tiny_model):
        with pytest.raises(ConfigurationError):
            tiny_model.extractor(TARGET)

    def test_add_target_extractor(self, tiny_model, rng):
        tiny_model.add_target_extractor(rng)
        assert tiny_model.config.target_extractor
        assert tiny_model.target_path_predictions(rng.random((2, 12))).shape == (2, 2)
        assert all(p.name.startswith("e_target") for p in tiny_model.target_parameters())

    def test_unknown_private_index(self, tiny_model):
        with pytest.raises(ConfigurationError):
            tiny_model.extractor(3)


class TestParameters:

    def test_block_names_unique(self, tiny_model):
        names = [param.name for param in tiny_model.parameters()]
        assert len(names) == len(set(names))

    def test_main_excludes_discriminator(self, tiny_model):
        main = {param.name for param in tiny_model.main_parameters()}
        assert not main & {param.name for param in tiny_model.discriminator_parameters()}
        assert any(name.startswith("e_private.2") for name in main)
        assert any(name.startswith("classifier") for name in main)

    def test_state_round_trip(self, tiny_config, tiny_model):
        other = SharedPrivateModel(tiny_config, rng=np.random.default_rng(99))
        other.load_state_dict(tiny_model.state_dict())
        for name, value in tiny_model.state_dict().items():
            np.testing.assert_array_equal(other.state_dict()[name], value)

    def test_state_dict_is_a_copy(self, tiny_model):
        state = tiny_model.state_dict()
        state["e_shared.0.weight"][...] = 0.0
        assert tiny_model.e_shared.layers[0].weight.value.any()

    def test_load_rejects_missing_block(self, tiny_model):
        state = tiny_model.state_dict()
        del state["discriminator.0.bias"]
        with pytest.raises(ConfigurationError):
            tiny_model.load_state_dict(state)

    def test_load_rejects_wrong_shape(self, tiny_model):
        state = tiny_model.state_dict()
        state["classifier.0.bias"] = np.zeros(3)
        with pytest.raises(DimensionError):
            tiny_model.load_state_dict(state)

    def test_seeded_initialization(self, tiny_config):
        a = SharedPrivateModel(tiny_config, rng=np.random.default_rng(5)).state_dict()
        b = SharedPrivateModel(tiny_config, rng=np.random.default_rng(5)).state_dict()
        assert all(np.array_equal(a[name], b[name]) for name in a)
