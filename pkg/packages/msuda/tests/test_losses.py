"""
Loss values, gradient routing and finite-difference agreement
"""

import numpy as np
import pytest

from models.config_models import ModelConfig
from models.data_models import UNLABELED
from services.losses import (
    classifier_loss,
    discriminator_loss,
    main_phase_loss,
    private_domain_loss,
    shared_adversarial_loss,
    shared_domain_accuracy,
    stack_batches,
)
from services.network import TARGET, SharedPrivateModel
from services.numeric_core import AdamOptimizer, gradient_check
from services.training_service import assert_unchanged, snapshot
from utils.batching import DomainBatch, LabeledBatch
from utils.errors import ContractViolation, DimensionError


def _domain_batch(rng, per_domain=3, num_domains=4, dim=12):
    domains = np.repeat(np.arange(num_domains), per_domain)
    return DomainBatch(rng.random((domains.size, dim)), domains)


def _source_part(batch: DomainBatch, num_sources=3) -> DomainBatch:
    rows = batch.domains < num_sources
    return DomainBatch(batch.x[rows], batch.domains[rows])


def _labeled(rng, j, n=5, dim=12):
    return LabeledBatch(j, rng.random((n, dim)), rng.integers(2, size=n))


def _grads_nonzero(params):
    return any(param.grad.any() for param in params)


class TestDiscriminatorLoss:

    def test_zero_discriminator_gives_two_uniform_terms(self, tiny_model, rng):
        for param in tiny_model.discriminator_parameters():
            param.value[...] = 0.0
        batch = _domain_batch(rng)
        loss = discriminator_loss(tiny_model, batch, _source_part(batch))
        assert loss == pytest.approx(2 * np.log(4), abs=1e-4)
        assert loss == pytest.approx(2.7726, abs=1e-4)

    def test_only_discriminator_receives_gradients(self, tiny_model, rng):
        batch = _domain_batch(rng)
        tiny_model.zero_grad()
        discriminator_loss(tiny_model, batch, _source_part(batch), backward=True)
        assert _grads_nonzero(tiny_model.discriminator_parameters())
        assert not _grads_nonzero(tiny_model.main_parameters())

    def test_target_row_in_private_batch(self, tiny_model, rng):
        batch = _domain_batch(rng)
        with pytest.raises(ContractViolation):
            discriminator_loss(tiny_model, batch, batch)

    def test_domain_out_of_range(self, tiny_model, rng):
        batch = DomainBatch(rng.random((2, 12)), np.array([0, 4]))
        with pytest.raises(DimensionError):
            discriminator_loss(tiny_model, batch, DomainBatch(np.zeros((0, 12)), np.zeros(0, dtype=np.int64)))

    def test_gradient_check(self, tiny_model, rng):
        batch = _domain_batch(rng)
        source = _source_part(batch)

        def loss_and_grad():
            tiny_model.zero_grad()
            return discriminator_loss(tiny_model, batch, source, backward=True)

        assert gradient_check(loss_and_grad, tiny_model.discriminator_parameters(), num_coords=20) < 1e-4

    def test_converges_on_separable_features(self, rng):
        model = SharedPrivateModel(ModelConfig(input_dim=8, hidden_dim=32, feature_dim=16, num_sources=3),
                                   rng=np.random.default_rng(11))
        domains = np.repeat(np.arange(4), 5)
        x = 3.0 * np.eye(8)[domains] + 0.01 * rng.random((domains.size, 8))
        batch = DomainBatch(x, domains)
        source = _source_part(batch)
        extractors = snapshot(model.main_parameters())
        optimizer = AdamOptimizer(model.discriminator_parameters(), lr=0.05)

        for _ in range(1500):
            model.zero_grad()
            discriminator_loss(model, batch, source, backward=True)
            optimizer.step()

        assert discriminator_loss(model, batch, source) < 0.05
        assert_unchanged(extractors, model.main_parameters(), "discriminator training")


class TestClassifierLoss:

    def test_rejects_unlabeled_rows(self, tiny_model, rng):
        batch = _labeled(rng, 0)
        batch.y[1] = UNLABELED
        with pytest.raises(ContractViolation):
            classifier_loss(tiny_model, 0, batch)

    def test_rejects_foreign_domain(self, tiny_model, rng):
        with pytest.raises(ContractViolation):
            classifier_loss(tiny_model, 1, _labeled(rng, 0))

    def test_trains_only_its_own_path(self, tiny_model, rng):
        tiny_model.zero_grad()
        classifier_loss(tiny_model, 1, _labeled(rng, 1), backward=True)
        assert _grads_nonzero(tiny_model.e_private[1].parameters())
        assert _grads_nonzero(tiny_model.classifier.parameters())
        assert _grads_nonzero(tiny_model.e_shared.parameters())
        assert not _grads_nonzero(tiny_model.e_private[0].parameters())
        assert not _grads_nonzero(tiny_model.discriminator_parameters())

    def test_target_extractor_path(self, tiny_model, rng):
        tiny_model.add_target_extractor(rng)
        tiny_model.zero_grad()
        classifier_loss(tiny_model, 3, _labeled(rng, 3), backward=True, extractor=TARGET)
        assert _grads_nonzero(tiny_model.target_parameters())
        assert not any(_grads_nonzero(e.parameters()) for e in tiny_model.e_private)

    def test_gradient_check(self, tiny_model, rng):
        batch = _labeled(rng, 2, n=6)
        params = (tiny_model.e_shared.parameters() + tiny_model.e_private[2].parameters()
                  + tiny_model.classifier.parameters())

        def loss_and_grad():
            tiny_model.zero_grad()
            return classifier_loss(tiny_model, 2, batch, backward=True)

        assert gradient_check(loss_and_grad, params, num_coords=20) < 1e-4


class TestMainPhaseLoss:

    def test_adversarial_term_is_negated(self, tiny_model, rng):
        batch = _domain_batch(rng)
        ce = -shared_adversarial_loss(tiny_model, batch, lam=1.0)
        assert shared_adversarial_loss(tiny_model, batch, lam=0.5) == pytest.approx(-0.5 * ce)
        assert ce > 0

    def test_discriminator_stays_untouched(self, tiny_model, rng):
        tiny_model.zero_grad()
        main_phase_loss(tiny_model, [_labeled(rng, j) for j in range(3)], _domain_batch(rng), 1.0,
                        include_private_coop_term=True, backward=True)
        assert not _grads_nonzero(tiny_model.discriminator_parameters())
        assert _grads_nonzero(tiny_model.e_shared.parameters())

    def test_sum_of_terms(self, tiny_model, rng):
        sources = [_labeled(rng, j) for j in range(3)]
        batch = _domain_batch(rng)
        expected = sum(classifier_loss(tiny_model, j, b) for j, b in enumerate(sources))
        expected += shared_adversarial_loss(tiny_model, batch, 0.5)
        expected += private_domain_loss(tiny_model, _source_part(batch))
        total = main_phase_loss(tiny_model, sources, batch, 0.5, include_private_coop_term=True)
        assert total == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 1.0])
    @pytest.mark.parametrize("coop", [False, True])
    def test_gradient_check(self, tiny_model, rng, lam, coop):
        sources = [_labeled(rng, j, n=4) for j in range(3)]
        batch = _domain_batch(rng, per_domain=2)

        def loss_and_grad():
            tiny_model.zero_grad()
            return main_phase_loss(tiny_model, sources, batch, lam, include_private_coop_term=coop, backward=True)

        assert gradient_check(loss_and_grad, tiny_model.main_parameters(), num_coords=20) < 1e-4

    def test_gradient_check_with_hidden_heads(self, tiny_config, rng):
        model = SharedPrivateModel(tiny_config.model_copy(update={"head_hidden_dim": 5}), rng=np.random.default_rng(3))
        assert len(model.classifier.layers) == 2 and len(model.discriminator.layers) == 2
        sources = [_labeled(rng, j, n=4) for j in range(3)]
        batch = _domain_batch(rng, per_domain=2)

        def main_loss():
            model.zero_grad()
            return main_phase_loss(model, sources, batch, 1.0, backward=True)

        def critic_loss():
            model.zero_grad()
            return discriminator_loss(model, batch, _source_part(batch), backward=True)

        assert gradient_check(main_loss, model.main_parameters(), num_coords=20) < 1e-4
        assert gradient_check(critic_loss, model.discriminator_parameters(), num_coords=20) < 1e-4


class TestDomainMetrics:

    def test_accuracy_bounds(self, tiny_model, rng):
        batch = _domain_batch(rng)
        assert 0.0 <= shared_domain_accuracy(tiny_model, batch.x, batch.domains) <= 1.0
        assert shared_domain_accuracy(tiny_model, np.zeros((0, 12)), np.zeros(0)) == 0.0

    def test_stack_batches(self, rng):
        a = DomainBatch(rng.random((2, 3)), np.array([0, 0]))
        b = DomainBatch(rng.random((3, 3)), np.array([2, 2, 2]))
        stacked = stack_batches([a, b])
        assert len(stacked) == 5
        np.testing.assert_array_equal(stacked.domains, [0, 0, 2, 2, 2])
