"""
Training and inference records
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from models.config_models import ModelConfig

WEIGHT_TOLERANCE = 1e-9


class EpochMetrics(BaseModel):
    """One line of the metrics stream"""
    epoch: int
    loss_d: float
    loss_main: float
    shared_dom_acc: float = Field(ge=0.0, le=1.0)
    private_dom_acc: float = Field(ge=0.0, le=1.0)
    val_acc: float = Field(ge=0.0, le=1.0)


class PseudoLabelRound(BaseModel):
    """Bookkeeping for one 2ST-UDA labeling round"""
    round: int
    delta: float
    new_labels: int
    accumulated: int
    remaining: int
    bootstrap: bool = False
    accuracy: Optional[float] = None  # against reference labels, when the caller has them


class FinetuneEpoch(BaseModel):
    """One epoch of training E_t on the accumulated pseudo-labels"""
    epoch: int
    loss: float
    val_acc: float = Field(ge=0.0, le=1.0)


class EvalReport(BaseModel):
    """Accuracy of a checkpoint on a labeled corpus"""
    accuracy: float
    num_examples: int
    path: str
    weight_mode: str
    per_source: Dict[str, float] = {}
    uniform_ensemble: Optional[float] = None
    weighted_ensemble: Optional[float] = None
    target_path: Optional[float] = None


class CheckpointManifest(BaseModel):
    """Written next to the parameter container"""
    format_version: int
    model: ModelConfig
    domain_names: List[str]  # index order; the last entry is the target
    vocabulary_sha256: str
    framework: str
    created_at: str


@dataclass
class TrainingResult:
    history: List[EpochMetrics]
    best_epoch: Optional[int]
    stopped_early: bool


# ============================================================================
# PSEUDO-LABEL CURRICULUM STATE
# ============================================================================

@dataclass
class PseudoLabelState:
    """
    Δ schedule, accumulated pseudo-labels T_l and the remaining pool T.
    Pool entries are row indices into the target pool corpus.
    """
    initial_delta: float
    eta: float
    min_new: int
    remaining: np.ndarray
    rounds: int = 0
    labeled: Dict[int, int] = field(default_factory=dict)
    tau_prev: Optional[int] = None
    tau_prev2: Optional[int] = None

    @classmethod
    def start(cls, pool_size: int, delta: float = 0.98, eta: float = 0.02, min_new: int = 10) -> "PseudoLabelState":
        return cls(initial_delta=delta, eta=eta, min_new=min_new,
                   remaining=np.arange(pool_size, dtype=np.int64))

    @property
    def delta(self) -> float:
        # closed form keeps the schedule exact: Δ(r) = Δ₀ − r·η
        return round(self.initial_delta - self.rounds * self.eta, 12)

    @property
    def accumulated(self) -> int:
        return len(self.labeled)

    def labeled_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        rows = np.fromiter(self.labeled.keys(), dtype=np.int64, count=len(self.labeled))
        labels = np.fromiter(self.labeled.values(), dtype=np.int64, count=len(self.labeled))
        return rows, labels

    def accept(self, rows: np.ndarray, labels: np.ndarray) -> int:
        """Move newly labeled rows from T into T_l and advance Δ; returns |L|"""
        rows = np.asarray(rows, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if np.isin(rows, list(self.labeled)).any():
            raise ValueError("Pseudo-labeled rows must come from the remaining pool")
        for row, label in zip(rows.tolist(), labels.tolist()):
            self.labeled[row] = label
        self.remaining = np.setdiff1d(self.remaining, rows, assume_unique=True)
        self.tau_prev2, self.tau_prev = self.tau_prev, int(rows.size)
        self.rounds += 1
        return int(rows.size)

    def should_stop(self) -> bool:
        if self.delta <= 0.5:
            return True
        if self.tau_prev is None or self.tau_prev2 is None:
            return False
        return self.tau_prev + self.tau_prev2 <= self.min_new


# ============================================================================
# WEIGHTING AND PREDICTION RECORDS
# ============================================================================

@dataclass
class WeightVector:
    """Normalized instance-to-domain relations over the K sources"""
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise ValueError(f"WeightVector needs a non-empty 1-D array, got shape {self.weights.shape}")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"Weights must be non-negative and sum to 1, got {self.weights}")

    def __len__(self) -> int:
        return int(self.weights.size)


@dataclass
class TargetPrediction:
    combined: np.ndarray
    per_source: np.ndarray  # K × num_classes
    weights: WeightVector

    @property
    def confidence(self) -> float:
        return float(self.combined.max())

    @property
    def label(self) -> int:
        return int(np.argmax(self.combined))


@dataclass
class TargetPredictions:
    """Batched predictions: combined (n × C), per_source (K × n × C), weights (n × K)"""
    combined: np.ndarray
    per_source: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.combined.shape[0]

    def __getitem__(self, i: int) -> TargetPrediction:
        return TargetPrediction(self.combined[i], self.per_source[:, i, :], WeightVector(self.weights[i]))

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.combined, axis=1)

    @property
    def confidence(self) -> np.ndarray:
        return self.combined.max(axis=1)
