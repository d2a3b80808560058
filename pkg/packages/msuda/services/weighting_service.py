"""
Weighting Service
Uses the domain discriminator as an instance-to-domain probability estimator,
combines per-source predictions with those weights and selects pseudo-labels.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from models.config_models import WeightMode
from models.result_models import WEIGHT_TOLERANCE, TargetPredictions, WeightVector
from services.network import SharedPrivateModel
from utils.errors import DimensionError

logger = logging.getLogger(__name__)

PREDICT_CHUNK = 1024


# ============================================================================
# WEIGHTS
# ============================================================================

def raw_instance_weights(model: SharedPrivateModel, x, mode: WeightMode = WeightMode.SHARED) -> np.ndarray:
    """Unnormalized source relations (n × K) read from D"""
    mode = WeightMode(mode)
    x = model.prepare_input(x)
    if mode == WeightMode.SHARED:
        # drop the target column
        return model.discriminate(model.e_shared(x))[:, :model.num_sources]

    columns = [
        model.discriminate(extractor(x))[:, j]
        for j, extractor in enumerate(model.e_private)
    ]
    return np.stack(columns, axis=1)


def normalize_weights(raw: np.ndarray) -> np.ndarray:
    """Clamp at zero and renormalize rows; all-zero rows fall back to uniform"""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    clamped = np.maximum(raw, 0.0)
    totals = clamped.sum(axis=1, keepdims=True)
    degenerate = totals[:, 0] <= 0.0
    if degenerate.any():
        logger.warning(f"⚠️ {int(degenerate.sum())} instance(s) with all-zero source weights; using uniform 1/K")
        clamped[degenerate] = 1.0
        totals[degenerate] = clamped.shape[1]
    return clamped / totals


def instance_weights(model: SharedPrivateModel, x, mode: WeightMode = WeightMode.SHARED) -> np.ndarray:
    """Normalized instance-to-domain weights, one row per instance (n × K)"""
    return normalize_weights(raw_instance_weights(model, x, mode))


def instance_weight_vector(model: SharedPrivateModel, x, mode: WeightMode = WeightMode.SHARED) -> WeightVector:
    """Weights of a single instance"""
    weights = instance_weights(model, np.atleast_2d(x), mode)
    if weights.shape[0] != 1:
        raise DimensionError(f"Expected one instance, got {weights.shape[0]}")
    return WeightVector(weights[0])


# ============================================================================
# COMBINATION
# ============================================================================

def combine_predictions(per_source: np.ndarray, weights) -> np.ndarray:
    """
    Convex combination Σ_j w_j · ĉ_j.

    Batched: per_source K × n × C with weights n × K → n × C.
    Single instance: per_source K × C with weights of length K → C.
    """
    per_source = np.asarray(per_source, dtype=np.float64)
    weights = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)

    if per_source.ndim == 2:
        if weights.ndim != 1 or weights.shape[0] != per_source.shape[0]:
            raise DimensionError(f"{weights.shape} weights for {per_source.shape[0]} source predictions")
        return weights @ per_source

    if per_source.ndim != 3 or weights.shape != (per_source.shape[1], per_source.shape[0]):
        raise DimensionError(
            f"Weights of shape {weights.shape} do not match per-source predictions {per_source.shape}"
        )
    return np.einsum("nk,knc->nc", weights, per_source)


def predict_target(model: SharedPrivateModel, x, mode: WeightMode = WeightMode.SHARED,
                   weights: Optional[np.ndarray] = None) -> TargetPredictions:
    """
    Source predictions, D weights and their combination for a batch.
    Passing `weights` (e.g. uniform) overrides the learned ones.
    """
    x = model.prepare_input(x)
    per_source = model.source_predictions(x)
    if weights is None:
        weights = instance_weights(model, x, mode)
    combined = combine_predictions(per_source, weights)
    return TargetPredictions(combined=combined, per_source=per_source, weights=weights)


def uniform_weights(n: int, num_sources: int) -> np.ndarray:
    return np.full((n, num_sources), 1.0 / num_sources)


def predict_corpus(model: SharedPrivateModel, features, mode: WeightMode = WeightMode.SHARED,
                   uniform: bool = False, chunk: int = PREDICT_CHUNK) -> TargetPredictions:
    """predict_target over a sparse corpus in dense chunks"""
    n = features.shape[0]
    parts = []
    for start in range(0, n, chunk):
        block = model.prepare_input(features[start:start + chunk])
        override = uniform_weights(block.shape[0], model.num_sources) if uniform else None
        parts.append(predict_target(model, block, mode, weights=override))

    if not parts:
        k, c = model.num_sources, model.config.num_classes
        return TargetPredictions(np.zeros((0, c)), np.zeros((k, 0, c)), np.zeros((0, k)))
    return TargetPredictions(
        combined=np.vstack([p.combined for p in parts]),
        per_source=np.concatenate([p.per_source for p in parts], axis=1),
        weights=np.vstack([p.weights for p in parts]),
    )


def predict_target_path(model: SharedPrivateModel, features, chunk: int = PREDICT_CHUNK) -> np.ndarray:
    """C(E_s(x), E_t(x)) class probabilities over a corpus"""
    n = features.shape[0]
    parts = [model.target_path_predictions(features[start:start + chunk]) for start in range(0, n, chunk)]
    if not parts:
        return np.zeros((0, model.config.num_classes))
    return np.vstack(parts)


def check_weight_rows(weights: np.ndarray) -> bool:
    """True when every row is non-negative and sums to one"""
    weights = np.asarray(weights)
    return bool(np.all(weights >= 0) and np.all(np.abs(weights.sum(axis=1) - 1.0) <= WEIGHT_TOLERANCE))


# ============================================================================
# PSEUDO-LABEL SELECTION
# ============================================================================

def pseudo_label_select(
        ensemble: np.ndarray,
        target_path: Optional[np.ndarray],
        delta: float,
        bootstrap: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Accept rows whose ensemble confidence exceeds Δ; outside bootstrap the
    target path must also exceed Δ and agree on the label. Ties at Δ are rejected.
    Returns (positions, labels).
    """
    ensemble = np.asarray(ensemble, dtype=np.float64)
    ensemble_labels = np.argmax(ensemble, axis=1)
    accepted = ensemble.max(axis=1) > delta

    if not bootstrap:
        if target_path is None:
            raise DimensionError("Target-path predictions are required outside the bootstrap round")
        target_path = np.asarray(target_path, dtype=np.float64)
        if target_path.shape != ensemble.shape:
            raise DimensionError(f"Target-path shape {target_path.shape} != ensemble shape {ensemble.shape}")
        accepted &= target_path.max(axis=1) > delta
        accepted &= np.argmax(target_path, axis=1) == ensemble_labels

    positions = np.flatnonzero(accepted)
    return positions, ensemble_labels[positions]


def select_from_model(
        model: SharedPrivateModel,
        features,
        delta: float,
        bootstrap: bool = False,
        mode: WeightMode = WeightMode.SHARED,
        ensemble: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """pseudo_label_select driven by a model with E_t over a pool"""
    if ensemble is None:
        ensemble = predict_corpus(model, features, mode).combined
    target_path = None if bootstrap else predict_target_path(model, features)
    return pseudo_label_select(ensemble, target_path, delta, bootstrap)


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the label; 0.0 for an empty set"""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.argmax(probs, axis=1) == labels))
