"""
Experiment Orchestrator
Coordinates a run end to end: corpus ingestion and splits, WS-UDA training,
optional 2ST-UDA, checkpoints, metrics streams and the final report.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.config_models import Framework, ModelConfig, RunConfig, ValidationMode, WeightMode
from models.data_models import UNLABELED, Corpus, DatasetBundle, RawExample, Vocabulary
from models.result_models import EvalReport
from services.checkpoint_service import LoadedCheckpoint, load_checkpoint, save_checkpoint
from services.corpus_service import (
    attach_labels,
    build_vocabulary,
    load_corpus_files,
    read_label_sidecar,
    split_indices,
    vectorize_corpus,
)
from services.metrics_service import (
    METRICS_FILE,
    PSEUDO_LABELS_FILE,
    REPORT_FILE,
    RESOLVED_CONFIG_FILE,
    MetricsWriter,
    write_json,
)
from services.network import SharedPrivateModel
from services.self_training_service import SelfTrainingResult, train_2studa
from services.training_service import (
    SourceValidator,
    TargetPathValidator,
    TargetValidator,
    Validator,
    train_wsuda,
)
from services.weighting_service import (
    accuracy,
    combine_predictions,
    predict_corpus,
    predict_target_path,
    uniform_weights,
)
from utils.errors import ConfigurationError, NumericAbortError

logger = logging.getLogger(__name__)

WSUDA_DIR = "wsuda"
TWO_STAGE_DIR = "2studa"


# ============================================================================
# DATA
# ============================================================================

@dataclass
class RunData:
    """Vectorized corpora of one run; target labels never reach training"""
    vocabulary: Vocabulary
    domain_names: List[str]
    sources: List[Corpus]
    target_pool: Corpus
    sealed_target_labels: np.ndarray
    target_val: Optional[Corpus] = None
    target_test: Optional[Corpus] = None
    source_val: Optional[List[Corpus]] = None

    def bundle(self) -> DatasetBundle:
        if not self.sources:
            raise ConfigurationError("No source corpora loaded for this run")
        return DatasetBundle(self.sources, self.target_pool, self.sealed_target_labels)


def load_domain(name: str, cfg: RunConfig) -> List[RawExample]:
    """
    Labeled files first, then unlabeled files. Inline labels in unlabeled files
    are dropped; a sidecar, when given, supplies their labels instead.
    """
    source = cfg.domains[name]
    labeled = load_corpus_files(source.labeled, cfg.workers)
    unlabeled = [RawExample(counts=example.counts) for example in load_corpus_files(source.unlabeled, cfg.workers)]
    if source.labels is not None:
        unlabeled = attach_labels(unlabeled, read_label_sidecar(source.labels), source.labels)
    unlabeled_in_labeled = sum(1 for example in labeled if example.label is None)
    if unlabeled_in_labeled:
        logger.warning(f"⚠️ Domain '{name}': {unlabeled_in_labeled} documents in labeled files carry no label")
    logger.info(f"Domain '{name}': {len(labeled)} documents from labeled files, {len(unlabeled)} from unlabeled files")
    return labeled + unlabeled


def prepare_data(cfg: RunConfig, vocabulary: Optional[Vocabulary] = None,
                 source_names: Optional[List[str]] = None, target_index: Optional[int] = None) -> RunData:
    """
    Parse every configured domain, build (or reuse) the vocabulary over all of
    them, strip target labels into the sealed channel and cut the validation splits.
    """
    source_names = cfg.source_names if source_names is None else source_names
    raw = {name: load_domain(name, cfg) for name in source_names + [cfg.target]}
    if vocabulary is None:
        vocabulary = build_vocabulary(list(raw.values()), cfg.vocab_size)

    k = len(source_names) if target_index is None else target_index
    sources, source_val = [], []
    for j, name in enumerate(source_names):
        corpus = vectorize_corpus(raw[name], vocabulary, name, j)
        if corpus.labeled_indices.size == 0:
            raise ConfigurationError(f"Source domain '{name}' has no labeled documents")
        if cfg.validation == ValidationMode.SOURCE and cfg.source_holdout > 0:
            keep, held = _holdout(corpus, cfg.source_holdout, cfg.seed + j)
            sources.append(corpus.subset(keep))
            source_val.append(corpus.subset(held, f"{name}.val"))
        else:
            sources.append(corpus)

    target = vectorize_corpus(raw[cfg.target], vocabulary, cfg.target, k)
    if len(target) == 0:
        raise ConfigurationError(f"Target domain '{cfg.target}' has no documents")

    target_val = target_test = None
    labeled = target.labeled_indices
    if labeled.size:
        val_rows, test_rows = split_indices(labeled.size, cfg.target_fractions, cfg.seed)
        target_val = target.subset(labeled[val_rows], f"{cfg.target}.val") if val_rows.size else None
        target_test = target.subset(labeled[test_rows], f"{cfg.target}.test") if test_rows.size else None
        logger.info(f"Target '{cfg.target}': {labeled.size} labeled documents → "
                    f"{val_rows.size} validation / {test_rows.size} test")
    elif cfg.validation == ValidationMode.TARGET:
        raise ConfigurationError(
            f"validation=target needs labeled documents for '{cfg.target}'; use validation=source instead"
        )

    return RunData(
        vocabulary=vocabulary,
        domain_names=list(source_names) + [cfg.target],
        sources=sources,
        target_pool=target.without_labels(),
        sealed_target_labels=target.labels.copy(),
        target_val=target_val,
        target_test=target_test,
        source_val=source_val or None,
    )


def _holdout(corpus: Corpus, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Hold out a fraction of the labeled rows; unlabeled rows always stay in training"""
    labeled = corpus.labeled_indices
    train_rows, held_rows = split_indices(labeled.size, (1.0 - fraction, fraction), seed)
    unlabeled = np.flatnonzero(corpus.labels == UNLABELED)
    return np.sort(np.concatenate([labeled[train_rows], unlabeled])), np.sort(labeled[held_rows])


# ============================================================================
# EVALUATION
# ============================================================================

def evaluate_model(
        model: SharedPrivateModel,
        corpus: Corpus,
        source_names: List[str],
        mode: WeightMode = WeightMode.SHARED,
        path: str = "ensemble"
) -> EvalReport:
    """Accuracy of the weighted ensemble (or target path) plus the per-source breakdown"""
    corpus = corpus.subset(corpus.labeled_indices)
    if len(corpus) == 0:
        raise ConfigurationError(f"Corpus '{corpus.name}' has no labeled documents to evaluate on")
    if path == "target" and model.e_target is None:
        raise ConfigurationError("Target-path evaluation needs a 2ST-UDA checkpoint with E_t")

    labels = corpus.labels
    predictions = predict_corpus(model, corpus.features, mode)
    uniform = combine_predictions(predictions.per_source, uniform_weights(len(corpus), model.num_sources))
    target_path = accuracy(predict_target_path(model, corpus.features), labels) if model.e_target is not None else None
    weighted = accuracy(predictions.combined, labels)

    return EvalReport(
        accuracy=target_path if path == "target" else weighted,
        num_examples=len(corpus),
        path=path,
        weight_mode=WeightMode(mode).value,
        per_source={name: accuracy(predictions.per_source[j], labels) for j, name in enumerate(source_names)},
        uniform_ensemble=accuracy(uniform, labels),
        weighted_ensemble=weighted,
        target_path=target_path,
    )


# ============================================================================
# ORCHESTRATOR
# ============================================================================

class ExperimentOrchestrator:
    """Runs one configured experiment and writes everything under cfg.out_dir"""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out_dir = Path(cfg.out_dir)
        self.report: Dict[str, Any] = {}

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def _model_config(self, data: RunData) -> ModelConfig:
        update = {"input_dim": len(data.vocabulary), "num_sources": len(data.sources), "target_extractor": False}
        if self.cfg.model.input_dim != update["input_dim"]:
            logger.info(f"input_dim set to the vocabulary size {update['input_dim']}")
        return self.cfg.model.model_copy(update=update)

    def _validator(self, data: RunData, target_path: bool = False) -> Optional[Validator]:
        if self.cfg.validation == ValidationMode.SOURCE:
            return None if target_path else SourceValidator(data.source_val or data.sources)
        if data.target_val is None:
            raise ConfigurationError("Target validation split is empty; adjust target_fractions")
        if target_path:
            return TargetPathValidator(data.target_val)
        return TargetValidator(data.target_val, self.cfg.weight_mode)

    def _save_last_good(self, name: str, model: SharedPrivateModel, data: RunData, framework: str,
                        error: NumericAbortError):
        if error.last_good_state is None:
            return
        directory = self.out_dir / f"{name}_last_good"
        save_checkpoint(directory, model, data.vocabulary, data.domain_names, framework, error.last_good_state)
        logger.error(f"💾 Last good parameters written to {directory}")

    # ------------------------------------------------------------------
    # phases
    # ------------------------------------------------------------------

    def run_wsuda(self, data: RunData) -> SharedPrivateModel:
        cfg = self.cfg
        model = SharedPrivateModel(self._model_config(data), rng=np.random.default_rng(cfg.seed))
        sink = MetricsWriter(self.out_dir / METRICS_FILE)
        try:
            result = train_wsuda(model, data.bundle(), cfg.train, self._validator(data), sink)
        except NumericAbortError as e:
            self._save_last_good(WSUDA_DIR, model, data, Framework.WS.value, e)
            raise

        save_checkpoint(self.out_dir / WSUDA_DIR, model, data.vocabulary, data.domain_names, Framework.WS.value)
        self.report[WSUDA_DIR] = {
            "epochs": len(result.history),
            "best_epoch": result.best_epoch,
            "stopped_early": result.stopped_early,
            "best_val_acc": result.history[result.best_epoch].val_acc if result.best_epoch is not None else None,
        }
        self._evaluate(WSUDA_DIR, model, data, "ensemble")
        return model

    def run_2studa(self, data: RunData, model: SharedPrivateModel) -> SelfTrainingResult:
        cfg = self.cfg
        rounds = MetricsWriter(self.out_dir / PSEUDO_LABELS_FILE)
        try:
            result = train_2studa(
                model, data.target_pool, cfg.pseudo_label, cfg.train, cfg.weight_mode,
                validator=self._validator(data, target_path=True),
                round_sink=rounds,
                reference_labels=data.sealed_target_labels,
            )
        except NumericAbortError as e:
            self._save_last_good(TWO_STAGE_DIR, model, data, Framework.TWO_STAGE.value, e)
            raise

        save_checkpoint(self.out_dir / TWO_STAGE_DIR, model, data.vocabulary, data.domain_names,
                        Framework.TWO_STAGE.value)
        self.report[TWO_STAGE_DIR] = {
            "rounds": len(result.rounds),
            "final_delta": result.state.delta,
            "pseudo_labels": result.state.accumulated,
            "finetune_epochs": len(result.finetune.history) if result.finetune else 0,
            "finetune_best_epoch": result.finetune.best_epoch if result.finetune else None,
        }
        self._evaluate(TWO_STAGE_DIR, model, data, "target")
        return result

    def _evaluate(self, phase: str, model: SharedPrivateModel, data: RunData, path: str):
        if data.target_test is None:
            logger.info(f"No labeled target test split; skipping {phase} evaluation")
            return
        report = evaluate_model(model, data.target_test, data.domain_names[:-1], self.cfg.weight_mode, path)
        self.report[phase]["test"] = report.model_dump(mode="json")
        logger.info(f"📊 {phase} test accuracy on '{data.target_test.name}': {report.accuracy:.4f} "
                    f"(weighted={report.weighted_ensemble:.4f}, uniform={report.uniform_ensemble:.4f})")

    def _load_prior(self) -> LoadedCheckpoint:
        prior = load_checkpoint(self.cfg.wsuda_checkpoint)
        trained_target = prior.manifest.domain_names[-1]
        if trained_target != self.cfg.target:
            raise ConfigurationError(
                f"Checkpoint {self.cfg.wsuda_checkpoint} was trained for target '{trained_target}', "
                f"not '{self.cfg.target}'"
            )
        return prior

    # ------------------------------------------------------------------
    # entry point
    # ------------------------------------------------------------------

    def run(self) -> Dict[str, Any]:
        cfg = self.cfg
        reuse_checkpoint = cfg.framework == Framework.TWO_STAGE and cfg.wsuda_checkpoint is not None
        cfg.validate_for_training(require_sources=not reuse_checkpoint)

        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(self.out_dir / RESOLVED_CONFIG_FILE, cfg.resolved_dump())
        logger.info(f"🚀 Run '{cfg.framework.value}' → {self.out_dir} (target={cfg.target}, seed={cfg.seed})")

        if reuse_checkpoint:
            prior = self._load_prior()
            data = prepare_data(cfg, prior.vocabulary, source_names=[], target_index=prior.model.num_sources)
            data.domain_names = prior.manifest.domain_names
            model = prior.model
        else:
            data = prepare_data(cfg)
            model = self.run_wsuda(data)

        self.report.update({
            "framework": cfg.framework.value,
            "target": cfg.target,
            "domain_names": data.domain_names,
            "vocabulary_size": len(data.vocabulary),
        })

        if cfg.framework == Framework.TWO_STAGE:
            self.run_2studa(data, model)

        write_json(self.out_dir / REPORT_FILE, self.report)
        logger.info(f"✅ Run finished; report at {self.out_dir / REPORT_FILE}")
        return self.report
