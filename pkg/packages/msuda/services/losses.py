"""
Losses
Discriminator objective, per-source classifier objective and the main-phase
objective of the adversarial loop. Each loss returns its scalar value and,
when `backward=True`, accumulates gradients into the parameter blocks it
trains. Callers zero gradients before a step.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

from models.data_models import UNLABELED
from services.network import TARGET, ExtractorKey, SharedPrivateModel
from services.numeric_core import Matrix, cross_entropy, cross_entropy_grad, one_hot, softmax
from utils.batching import DomainBatch, LabeledBatch
from utils.errors import ContractViolation, DimensionError

logger = logging.getLogger(__name__)


# ============================================================================
# ROUTING HELPERS
# ============================================================================

def _check_domains(model: SharedPrivateModel, domains: np.ndarray, sources_only: bool):
    if domains.size == 0:
        return
    upper = model.num_sources if sources_only else model.config.num_domains
    if domains.min() < 0 or domains.max() >= upper:
        if sources_only and domains.max() == model.num_sources:
            raise ContractViolation(
                "Target-domain instance routed to a private extractor; private batches must come from sources"
            )
        raise DimensionError(f"Domain labels must lie in [0, {upper}), got range [{domains.min()}, {domains.max()}]")


def _private_features(model: SharedPrivateModel, x: Matrix, domains: np.ndarray) -> Tuple[Matrix, list]:
    """Route every row through the private extractor of its own domain"""
    _check_domains(model, domains, sources_only=True)
    z = np.zeros((x.shape[0], model.config.feature_dim), dtype=x.dtype)
    routes = []
    for j in np.unique(domains):
        rows = np.flatnonzero(domains == j)
        extractor = model.e_private[int(j)]
        z_j, caches = extractor.forward(x[rows])
        z[rows] = z_j
        routes.append((extractor, rows, caches))
    return z, routes


def _domain_term(model: SharedPrivateModel, z: Matrix, domains: np.ndarray, scale: float,
                 backward: bool) -> Tuple[float, Matrix]:
    """Cross-entropy of D on features z; returns the loss and, on backward, scale·dL/dz"""
    logits, cache = model.discriminator.forward(z)
    probs = softmax(logits)
    targets = one_hot(domains, model.config.num_domains)
    loss = cross_entropy(probs, targets)
    d_z = None
    if backward:
        d_z = model.discriminator.backward(scale * cross_entropy_grad(probs, targets), cache)
    return loss, d_z


def _discard_discriminator_grads(model: SharedPrivateModel):
    for param in model.discriminator_parameters():
        param.zero_grad()


# ============================================================================
# DISCRIMINATOR
# ============================================================================

def discriminator_loss(
        model: SharedPrivateModel,
        all_batch: DomainBatch,
        source_batch: DomainBatch,
        backward: bool = False
) -> float:
    """
    Mean domain cross-entropy of D on shared features over the all-domain batch
    plus mean domain cross-entropy of D on private features over the source batch.
    On backward only D's blocks receive gradients.
    """
    x_all = model.prepare_input(all_batch.x)
    domains_all = np.asarray(all_batch.domains, dtype=np.int64)
    _check_domains(model, domains_all, sources_only=False)
    z_shared = model.e_shared(x_all)
    shared_term, _ = _domain_term(model, z_shared, domains_all, 1.0, backward)

    private_term = 0.0
    if len(source_batch):
        x_src = model.prepare_input(source_batch.x)
        domains_src = np.asarray(source_batch.domains, dtype=np.int64)
        z_private, _ = _private_features(model, x_src, domains_src)
        private_term, _ = _domain_term(model, z_private, domains_src, 1.0, backward)

    return shared_term + private_term


# ============================================================================
# CLASSIFIER
# ============================================================================

def classifier_loss(
        model: SharedPrivateModel,
        j: int,
        batch: LabeledBatch,
        backward: bool = False,
        extractor: ExtractorKey = None
) -> float:
    """
    Mean cross-entropy of C(E_s(x), E_p_j(x)) against the class labels.
    `extractor=TARGET` swaps E_p_j for E_t (2ST-UDA).
    """
    labels = np.asarray(batch.y, dtype=np.int64)
    if np.any(labels == UNLABELED):
        raise ContractViolation(
            f"Classifier batch for path {j} contains {int(np.sum(labels == UNLABELED))} unlabeled instances"
        )
    key = j if extractor is None else extractor
    if key != TARGET and batch.domain != j:
        raise ContractViolation(f"Batch from domain {batch.domain} handed to private path {j}")

    x = model.prepare_input(batch.x)
    private = model.extractor(key)
    z_s, shared_caches = model.e_shared.forward(x)
    z_p, private_caches = private.forward(x)
    logits, head_caches = model.classifier.forward(np.hstack([z_s, z_p]))
    probs = softmax(logits)
    targets = one_hot(labels, model.config.num_classes)
    loss = cross_entropy(probs, targets)

    if backward:
        d_h = model.classifier.backward(cross_entropy_grad(probs, targets), head_caches)
        width = model.config.feature_dim
        model.e_shared.backward(d_h[:, :width], shared_caches)
        private.backward(d_h[:, width:], private_caches)
    return loss


# ============================================================================
# ADVERSARIAL AND COOPERATIVE DOMAIN TERMS
# ============================================================================

def shared_adversarial_loss(
        model: SharedPrivateModel,
        all_batch: DomainBatch,
        lam: float = 1.0,
        backward: bool = False
) -> float:
    """
    −λ · domain cross-entropy of D on shared features. Gradients flow into E_s;
    whatever reaches D's blocks is discarded.
    """
    x = model.prepare_input(all_batch.x)
    domains = np.asarray(all_batch.domains, dtype=np.int64)
    _check_domains(model, domains, sources_only=False)
    z_s, caches = model.e_shared.forward(x)
    loss, d_z = _domain_term(model, z_s, domains, -lam, backward)
    if backward:
        model.e_shared.backward(d_z, caches)
        _discard_discriminator_grads(model)
    return -lam * loss


def private_domain_loss(
        model: SharedPrivateModel,
        source_batch: DomainBatch,
        backward: bool = False
) -> float:
    """Domain cross-entropy of D on private features; gradients flow into each E_p_j"""
    if not len(source_batch):
        return 0.0
    x = model.prepare_input(source_batch.x)
    domains = np.asarray(source_batch.domains, dtype=np.int64)
    z_p, routes = _private_features(model, x, domains)
    loss, d_z = _domain_term(model, z_p, domains, 1.0, backward)
    if backward:
        for extractor, rows, caches in routes:
            extractor.backward(d_z[rows], caches)
        _discard_discriminator_grads(model)
    return loss


def main_phase_loss(
        model: SharedPrivateModel,
        source_batches: Sequence[LabeledBatch],
        all_batch: DomainBatch,
        lam: float,
        include_private_coop_term: bool = False,
        backward: bool = False
) -> float:
    """
    Σ_j classifier_loss(j) − λ · shared domain cross-entropy, optionally plus the
    private domain cross-entropy over the source rows of the all-domain batch.
    Trains E_s, every E_p_j and C; D stays frozen.
    """
    total = 0.0
    for batch in source_batches:
        total += classifier_loss(model, batch.domain, batch, backward=backward)

    total += shared_adversarial_loss(model, all_batch, lam, backward=backward)

    if include_private_coop_term:
        source_rows = np.flatnonzero(np.asarray(all_batch.domains) < model.num_sources)
        coop = DomainBatch(np.asarray(all_batch.x)[source_rows], np.asarray(all_batch.domains)[source_rows])
        total += private_domain_loss(model, coop, backward=backward)
    return total


# ============================================================================
# DOMAIN ACCURACY
# ============================================================================

def shared_domain_accuracy(model: SharedPrivateModel, x, domains: np.ndarray) -> float:
    """Fraction of instances whose domain D recovers from shared features"""
    domains = np.asarray(domains, dtype=np.int64)
    if domains.size == 0:
        return 0.0
    probs = model.discriminate(model.extract_shared(x))
    return float(np.mean(np.argmax(probs, axis=1) == domains))


def private_domain_accuracy(model: SharedPrivateModel, x, domains: np.ndarray) -> float:
    """Same on private features, each source instance through its own extractor"""
    domains = np.asarray(domains, dtype=np.int64)
    if domains.size == 0:
        return 0.0
    z_p, _ = _private_features(model, model.prepare_input(x), domains)
    probs = model.discriminate(z_p)
    return float(np.mean(np.argmax(probs, axis=1) == domains))


def stack_batches(batches: List[DomainBatch]) -> DomainBatch:
    """Pool per-domain minibatches into one domain-labeled batch"""
    return DomainBatch(
        x=np.vstack([batch.x for batch in batches]),
        domains=np.concatenate([np.asarray(batch.domains, dtype=np.int64) for batch in batches]),
    )
