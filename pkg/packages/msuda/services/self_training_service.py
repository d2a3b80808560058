"""
Self-Training Service
Two-stage adaptation: a confidence-threshold curriculum labels the target pool
with the weighted source ensemble, a target-private extractor E_t learns from
each round's new labels, and finally from everything accumulated.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from models.config_models import PseudoLabelConfig, TrainConfig, WeightMode
from models.data_models import UNLABELED, Corpus
from models.result_models import FinetuneEpoch, PseudoLabelRound, PseudoLabelState
from services.losses import classifier_loss
from services.network import TARGET, SharedPrivateModel
from services.numeric_core import AdamOptimizer
from services.training_service import Validator, snapshot, assert_unchanged, check_finite, early_stop
from services.weighting_service import accuracy, predict_corpus, predict_target_path, pseudo_label_select
from utils.batching import IndexSampler, LabeledBatch
from utils.errors import ConfigurationError, NumericAbortError

logger = logging.getLogger(__name__)

RoundSink = Callable[[PseudoLabelRound], None]


@dataclass
class FinetuneResult:
    history: List[FinetuneEpoch]
    best_epoch: Optional[int]
    stopped_early: bool


@dataclass
class SelfTrainingResult:
    state: PseudoLabelState
    rounds: List[PseudoLabelRound] = field(default_factory=list)
    finetune: Optional[FinetuneResult] = None


class TwoStageTrainer:
    """Pseudo-label curriculum over one target pool; trains E_t (and C when asked) only"""

    def __init__(
            self,
            model: SharedPrivateModel,
            pool: Corpus,
            pl_cfg: PseudoLabelConfig,
            train_cfg: TrainConfig,
            weight_mode: WeightMode = WeightMode.SHARED,
            validator: Optional[Validator] = None,
            state: Optional[PseudoLabelState] = None,
            round_sink: Optional[RoundSink] = None,
            reference_labels: Optional[np.ndarray] = None
    ):
        if len(pool) == 0:
            raise ConfigurationError(f"Target pool '{pool.name}' is empty")
        if pool.dim != model.config.input_dim:
            raise ConfigurationError(f"Pool dimension {pool.dim} != model input_dim {model.config.input_dim}")

        self.model = model
        self.pool = pool
        self.pl_cfg = pl_cfg
        self.train_cfg = train_cfg
        self.weight_mode = weight_mode
        self.validator = validator
        self.round_sink = round_sink
        self.reference_labels = reference_labels
        self.rng = np.random.default_rng(train_cfg.seed + 3)

        if model.e_target is None:
            model.add_target_extractor(np.random.default_rng(train_cfg.seed + 2))
            logger.info("🆕 Attached a freshly initialized target extractor")

        self.trainable = model.target_parameters()
        if pl_cfg.finetune_classifier:
            self.trainable = self.trainable + model.classifier.parameters()
        trainable_names = {param.name for param in self.trainable}
        self.frozen = [param for param in model.parameters() if param.name not in trainable_names]
        self.optimizer = AdamOptimizer(self.trainable, lr=train_cfg.lr)

        self.state = state or PseudoLabelState.start(len(pool), pl_cfg.delta, pl_cfg.eta, pl_cfg.min_new)
        self._ensemble: Optional[np.ndarray] = None
        self._last_good = model.state_dict()

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def ensemble(self) -> np.ndarray:
        """Weighted source-ensemble probabilities over the whole pool"""
        if self._ensemble is None or self.pl_cfg.finetune_classifier:
            self._ensemble = predict_corpus(self.model, self.pool.features, self.weight_mode).combined
        return self._ensemble

    def _train_steps(self, rows: np.ndarray, labels: np.ndarray, steps: int) -> float:
        """Minibatch steps of the target-path classifier loss; returns the mean loss"""
        sampler = IndexSampler(np.arange(rows.size), self.train_cfg.batch_size, self.rng)
        losses = []
        target_domain = self.model.num_sources
        for _ in range(steps):
            picked = sampler.next()
            batch = LabeledBatch(target_domain, self.pool.features[rows[picked]].toarray(), labels[picked])
            before = snapshot(self.frozen) if self.train_cfg.freeze_checks else None

            self.model.zero_grad()
            loss = classifier_loss(self.model, target_domain, batch, backward=True, extractor=TARGET)
            check_finite(loss, "target-path loss")
            self.optimizer.step()
            self.model.zero_grad()

            if before is not None:
                assert_unchanged(before, self.frozen, "target-extractor update")
            losses.append(loss)
        return float(np.mean(losses)) if losses else 0.0

    def _accumulated_accuracy(self) -> Optional[float]:
        """Accuracy of T_l over the rows whose reference label is known"""
        if self.reference_labels is None or self.state.accumulated == 0:
            return None
        rows, labels = self.state.labeled_arrays()
        known = self.reference_labels[rows]
        mask = known != UNLABELED
        if not mask.any():
            return None
        return float(np.mean(known[mask] == labels[mask]))

    # ------------------------------------------------------------------
    # curriculum
    # ------------------------------------------------------------------

    def run_round(self) -> PseudoLabelRound:
        state = self.state
        round_index = state.rounds
        delta = state.delta
        bootstrap = self.pl_cfg.bootstrap and round_index == 0
        remaining = state.remaining

        target_path = None
        if not bootstrap:
            target_path = predict_target_path(self.model, self.pool.features[remaining])
        positions, labels = pseudo_label_select(self.ensemble()[remaining], target_path, delta, bootstrap)
        rows = remaining[positions]

        if rows.size == 0:
            logger.warning(f"⚠️ Round {round_index}: no instance above Δ={delta:.2f}; lowering the threshold")
        else:
            steps = max(math.ceil(rows.size / self.train_cfg.batch_size), self.pl_cfg.iter_min_steps)
            loss = self._train_steps(rows, labels, steps)
            logger.debug(f"Round {round_index}: {steps} steps on {rows.size} pseudo-labels, mean loss {loss:.4f}")

        new_labels = state.accept(rows, labels)
        record = PseudoLabelRound(
            round=round_index,
            delta=delta,
            new_labels=new_labels,
            accumulated=state.accumulated,
            remaining=int(state.remaining.size),
            bootstrap=bootstrap,
            accuracy=self._accumulated_accuracy(),
        )
        self._last_good = self.model.state_dict()
        if self.round_sink is not None:
            self.round_sink(record)
        logger.info(f"🏷️ Round {round_index}: Δ={delta:.2f} |L|={new_labels} |T_l|={record.accumulated} "
                    f"|T|={record.remaining}" + (" (bootstrap)" if bootstrap else ""))
        return record

    def curriculum(self) -> List[PseudoLabelRound]:
        rounds = []
        while not self.state.should_stop():
            if self.state.remaining.size == 0:
                logger.info("Target pool exhausted")
                break
            rounds.append(self.run_round())
        logger.info(f"Curriculum finished after {self.state.rounds} round(s) at Δ={self.state.delta:.2f}, "
                    f"{self.state.accumulated} pseudo-labels")
        return rounds

    # ------------------------------------------------------------------
    # finetuning on T_l
    # ------------------------------------------------------------------

    def finetune(self) -> Optional[FinetuneResult]:
        rows, labels = self.state.labeled_arrays()
        if rows.size == 0:
            logger.warning("⚠️ No pseudo-labels accumulated; skipping finetuning")
            return None

        validator = self.validator or (
            lambda model: accuracy(predict_target_path(model, self.pool.features[rows]), labels)
        )
        steps = math.ceil(rows.size / self.train_cfg.batch_size)
        history: List[FinetuneEpoch] = []
        best_state, best_epoch, stopped_early = None, None, False

        for epoch in range(self.pl_cfg.finetune_max_epochs):
            loss = self._train_steps(rows, labels, steps)
            record = FinetuneEpoch(epoch=epoch, loss=loss, val_acc=float(validator(self.model)))
            history.append(record)
            self._last_good = self.model.state_dict()
            logger.info(f"📊 Finetune epoch {epoch}: loss={loss:.4f} val_acc={record.val_acc:.4f}")

            stop, best = early_stop([h.val_acc for h in history], self.train_cfg.patience)
            if best == epoch:
                best_state, best_epoch = snapshot(self.trainable), epoch
            if stop:
                stopped_early = True
                break

        if best_state is not None:
            for param in self.trainable:
                param.value[...] = best_state[param.name]
        return FinetuneResult(history=history, best_epoch=best_epoch, stopped_early=stopped_early)

    def fit(self) -> SelfTrainingResult:
        logger.info(f"🚀 2ST-UDA on pool '{self.pool.name}' ({len(self.pool)} instances), "
                    f"Δ₀={self.state.delta}, η={self.state.eta}, N={self.state.min_new}")
        frozen_before = snapshot(self.frozen)
        try:
            rounds = self.curriculum()
            finetune = self.finetune()
        except NumericAbortError as e:
            if e.last_good_state is None:
                e.last_good_state = self._last_good
            logger.error(f"❌ Numeric abort during 2ST-UDA: {e.message}")
            raise
        assert_unchanged(frozen_before, self.frozen, "2ST-UDA training")
        logger.info("✅ 2ST-UDA finished")
        return SelfTrainingResult(state=self.state, rounds=rounds, finetune=finetune)


def train_2studa(
        model: SharedPrivateModel,
        pool: Corpus,
        pl_cfg: PseudoLabelConfig,
        train_cfg: TrainConfig,
        weight_mode: WeightMode = WeightMode.SHARED,
        validator: Optional[Validator] = None,
        state: Optional[PseudoLabelState] = None,
        round_sink: Optional[RoundSink] = None,
        reference_labels: Optional[np.ndarray] = None
) -> SelfTrainingResult:
    """Train E_t on a WS-UDA model in place"""
    return TwoStageTrainer(
        model, pool, pl_cfg, train_cfg, weight_mode, validator, state, round_sink, reference_labels
    ).fit()
