"""
Training Service
Adversarial shared-private training: n_critic discriminator updates per main
update, epoch metrics, validation-based early stopping and NaN aborts.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.config_models import TrainConfig, WeightMode
from models.data_models import Corpus, DatasetBundle
from models.result_models import EpochMetrics, TrainingResult
from services.losses import (
    discriminator_loss,
    main_phase_loss,
    private_domain_accuracy,
    shared_domain_accuracy,
)
from services.network import SharedPrivateModel
from services.numeric_core import AdamOptimizer, Parameter
from services.weighting_service import accuracy, predict_corpus, predict_target_path
from utils.batching import DomainBatch, IndexSampler, LabeledBatch, Prefetcher
from utils.errors import ConfigurationError, ContractViolation, NumericAbortError

logger = logging.getLogger(__name__)

Validator = Callable[[SharedPrivateModel], float]
MetricsSink = Callable[[EpochMetrics], None]


# ============================================================================
# EARLY STOPPING
# ============================================================================

def early_stop(history: Sequence[Union[float, EpochMetrics]], patience: int) -> Tuple[bool, int]:
    """
    Stop once validation accuracy has not improved for `patience` epochs.
    Returns (stop, best_epoch); ties resolve to the earliest epoch.
    """
    if not history:
        raise ValueError("early_stop needs at least one epoch of history")
    scores = np.array([h.val_acc if isinstance(h, EpochMetrics) else float(h) for h in history])
    best = int(np.argmax(scores))
    return len(scores) - 1 - best >= patience, best


# ============================================================================
# VALIDATORS
# ============================================================================

class TargetValidator:
    """Weighted-ensemble accuracy on a labeled target split"""

    def __init__(self, corpus: Corpus, mode: WeightMode = WeightMode.SHARED):
        if not corpus.is_fully_labeled:
            raise ConfigurationError(f"Target validation corpus '{corpus.name}' must be labeled")
        self.corpus = corpus
        self.mode = mode

    def __call__(self, model: SharedPrivateModel) -> float:
        return accuracy(predict_corpus(model, self.corpus.features, self.mode).combined, self.corpus.labels)


class TargetPathValidator:
    """Accuracy of C(E_s, E_t) on a labeled target split"""

    def __init__(self, corpus: Corpus):
        if not corpus.is_fully_labeled:
            raise ConfigurationError(f"Target validation corpus '{corpus.name}' must be labeled")
        self.corpus = corpus

    def __call__(self, model: SharedPrivateModel) -> float:
        return accuracy(predict_target_path(model, self.corpus.features), self.corpus.labels)


class SourceValidator:
    """Mean accuracy of each source path on its own held-out labeled data"""

    def __init__(self, corpora: Sequence[Corpus]):
        self.corpora = [corpus.subset(corpus.labeled_indices) for corpus in corpora]
        if not any(len(corpus) for corpus in self.corpora):
            raise ConfigurationError("Source validation needs labeled held-out source data")

    def __call__(self, model: SharedPrivateModel) -> float:
        scores = []
        for corpus in self.corpora:
            if len(corpus):
                per_source = predict_corpus(model, corpus.features).per_source
                scores.append(accuracy(per_source[corpus.domain], corpus.labels))
        return float(np.mean(scores))


# ============================================================================
# WS-UDA TRAINER
# ============================================================================

@dataclass
class _Step:
    critic: List[Tuple[DomainBatch, DomainBatch]]
    sources: List[LabeledBatch]
    all_domains: DomainBatch


def snapshot(params: List[Parameter]) -> Dict[str, np.ndarray]:
    return {param.name: param.value.copy() for param in params}


def assert_unchanged(before: Dict[str, np.ndarray], params: List[Parameter], phase: str):
    for param in params:
        if not np.array_equal(before[param.name], param.value):
            raise ContractViolation(f"Frozen block '{param.name}' changed during the {phase}")


def check_finite(value: float, what: str, state: Optional[Dict[str, np.ndarray]] = None):
    if not math.isfinite(value):
        raise NumericAbortError(f"Non-finite {what}: {value}", last_good_state=state)


class WSUDATrainer:
    """Alternating discriminator / main updates over one DatasetBundle"""

    def __init__(
            self,
            model: SharedPrivateModel,
            data: DatasetBundle,
            cfg: TrainConfig,
            validator: Optional[Validator] = None,
            metrics_sink: Optional[MetricsSink] = None
    ):
        if data.num_sources != model.num_sources:
            raise ConfigurationError(f"Model has {model.num_sources} private paths but data has {data.num_sources} sources")
        if data.dim != model.config.input_dim:
            raise ConfigurationError(f"Data dimension {data.dim} != model input_dim {model.config.input_dim}")
        if data.n_target == 0:
            raise ConfigurationError(f"Target corpus '{data.target.name}' is empty")
        for corpus in data.sources:
            if corpus.labeled_indices.size == 0:
                raise ConfigurationError(f"Source corpus '{corpus.name}' has no labeled examples")

        self.model = model
        self.data = data
        self.cfg = cfg
        self.metrics_sink = metrics_sink

        union = data.union()
        self.union_x = union.features
        self.union_domains = union.domains
        self.offsets = np.cumsum([0] + [len(corpus) for corpus in data.sources])
        self.labeled_rows = [self.offsets[j] + corpus.labeled_indices for j, corpus in enumerate(data.sources)]
        self.domain_rows = [np.flatnonzero(union.domains == d) for d in range(model.config.num_domains)]

        streams = np.random.SeedSequence(cfg.seed).spawn(len(self.labeled_rows) + len(self.domain_rows))
        b = cfg.batch_size
        self.label_samplers = [
            IndexSampler(rows, b, np.random.default_rng(stream))
            for rows, stream in zip(self.labeled_rows, streams)
        ]
        self.domain_samplers = [
            IndexSampler(rows, b, np.random.default_rng(stream))
            for rows, stream in zip(self.domain_rows, streams[len(self.labeled_rows):])
        ]

        self.steps_per_epoch = math.ceil(max(rows.size for rows in self.labeled_rows) / b)
        self.d_optimizer = AdamOptimizer(model.discriminator_parameters(), lr=cfg.lr)
        self.main_optimizer = AdamOptimizer(model.main_parameters(), lr=cfg.lr)

        metric_rng = np.random.default_rng(cfg.seed + 1)
        self.metric_rows = [
            np.sort(metric_rng.choice(rows, size=min(cfg.metrics_sample, rows.size), replace=False))
            for rows in self.domain_rows
        ]
        self.validator = validator or SourceValidator(
            [corpus.subset(corpus.labeled_indices[:cfg.metrics_sample]) for corpus in data.sources]
        )

    # ------------------------------------------------------------------
    # batches
    # ------------------------------------------------------------------

    def _dense(self, rows: np.ndarray) -> np.ndarray:
        return self.union_x[rows].toarray()

    def _domain_batch(self) -> DomainBatch:
        rows = np.concatenate([sampler.next() for sampler in self.domain_samplers])
        return DomainBatch(self._dense(rows), self.union_domains[rows])

    def _steps(self, count: int) -> Iterator[_Step]:
        num_sources = self.model.num_sources
        for _ in range(count):
            critic = []
            for _ in range(self.cfg.n_critic):
                batch = self._domain_batch()
                source_rows = np.flatnonzero(batch.domains < num_sources)
                critic.append((batch, DomainBatch(batch.x[source_rows], batch.domains[source_rows])))
            sources = []
            for j, sampler in enumerate(self.label_samplers):
                rows = sampler.next()
                sources.append(LabeledBatch(j, self._dense(rows), self._source_labels(j, rows)))
            yield _Step(critic=critic, sources=sources, all_domains=self._domain_batch())

    def _source_labels(self, j: int, union_rows: np.ndarray) -> np.ndarray:
        return self.data.sources[j].labels[union_rows - self.offsets[j]]

    # ------------------------------------------------------------------
    # updates
    # ------------------------------------------------------------------

    def _critic_update(self, all_batch: DomainBatch, source_batch: DomainBatch) -> float:
        model = self.model
        frozen = model.main_parameters() + (model.target_parameters() if model.e_target is not None else [])
        before = snapshot(frozen) if self.cfg.freeze_checks else None

        model.zero_grad()
        loss = discriminator_loss(model, all_batch, source_batch, backward=True)
        check_finite(loss, "discriminator loss")
        self.d_optimizer.step()

        if before is not None:
            assert_unchanged(before, frozen, "discriminator update")
        return loss

    def _main_update(self, step: _Step) -> float:
        model = self.model
        frozen = model.discriminator_parameters()
        before = snapshot(frozen) if self.cfg.freeze_checks else None

        model.zero_grad()
        loss = main_phase_loss(
            model, step.sources, step.all_domains, self.cfg.lambda_,
            include_private_coop_term=self.cfg.include_private_coop_term, backward=True,
        )
        check_finite(loss, "main-phase loss")
        self.main_optimizer.step()
        model.zero_grad()

        if before is not None:
            assert_unchanged(before, frozen, "main update")
        return loss

    # ------------------------------------------------------------------
    # metrics
    # ------------------------------------------------------------------

    def domain_accuracies(self) -> Tuple[float, float]:
        rows = np.concatenate(self.metric_rows)
        x = self._dense(rows)
        domains = self.union_domains[rows]
        shared = shared_domain_accuracy(self.model, x, domains)
        source_mask = domains < self.model.num_sources
        private = private_domain_accuracy(self.model, x[source_mask], domains[source_mask])
        return shared, private

    # ------------------------------------------------------------------
    # loop
    # ------------------------------------------------------------------

    def fit(self) -> TrainingResult:
        cfg = self.cfg
        history: List[EpochMetrics] = []
        best_state = None
        best_epoch = None
        stopped_early = False
        last_good = self.model.state_dict()

        logger.info(f"🚀 WS-UDA training: K={self.model.num_sources}, {self.steps_per_epoch} steps/epoch, "
                    f"b={cfg.batch_size}, λ={cfg.lambda_}, n_critic={cfg.n_critic}, max_epochs={cfg.max_epochs}")

        for epoch in range(cfg.max_epochs):
            d_losses, main_losses = [], []
            try:
                for step in Prefetcher(self._steps(self.steps_per_epoch), cfg.prefetch):
                    for all_batch, source_batch in step.critic:
                        d_losses.append(self._critic_update(all_batch, source_batch))
                    main_losses.append(self._main_update(step))
            except NumericAbortError as e:
                if e.last_good_state is None:
                    e.last_good_state = last_good
                logger.error(f"❌ Numeric abort in epoch {epoch}: {e.message}")
                raise

            shared_acc, private_acc = self.domain_accuracies()
            metrics = EpochMetrics(
                epoch=epoch,
                loss_d=float(np.mean(d_losses)),
                loss_main=float(np.mean(main_losses)),
                shared_dom_acc=shared_acc,
                private_dom_acc=private_acc,
                val_acc=float(self.validator(self.model)),
            )
            history.append(metrics)
            if self.metrics_sink is not None:
                self.metrics_sink(metrics)
            logger.info(f"📊 Epoch {epoch}: loss_d={metrics.loss_d:.4f} loss_main={metrics.loss_main:.4f} "
                        f"shared_acc={shared_acc:.3f} private_acc={private_acc:.3f} val_acc={metrics.val_acc:.4f}")

            last_good = self.model.state_dict()
            stop, best = early_stop(history, cfg.patience)
            if best == epoch:
                best_state, best_epoch = last_good, epoch
            if stop:
                stopped_early = True
                logger.info(f"⏹️ Early stop after epoch {epoch}; best epoch {best_epoch} "
                            f"(val_acc={history[best_epoch].val_acc:.4f})")
                break

        if best_state is not None:
            self.model.load_state_dict(best_state)
        logger.info(f"✅ WS-UDA training finished after {len(history)} epoch(s)")
        return TrainingResult(history=history, best_epoch=best_epoch, stopped_early=stopped_early)


def train_wsuda(
        model: SharedPrivateModel,
        data: DatasetBundle,
        cfg: TrainConfig,
        validator: Optional[Validator] = None,
        metrics_sink: Optional[MetricsSink] = None
) -> TrainingResult:
    """Train the shared-private model in place; the best-validation parameters are restored at the end"""
    return WSUDATrainer(model, data, cfg, validator, metrics_sink).fit()
