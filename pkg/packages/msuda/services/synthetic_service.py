"""
Synthetic Service
Generates a multi-domain polarity benchmark: a shared block of words whose
polarity is global, and one private block per domain whose polarity is
flipped by that domain's sign. The target may borrow private words from the
sources whose sign agrees with its own.
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from models.config_models import SynthSpec
from models.data_models import DatasetBundle, RawExample, SentimentLabel, Vocabulary
from services.corpus_service import vectorize_corpus, write_blitzer, write_label_sidecar
from services.metrics_service import write_json
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

TARGET_NAME = "target"


def token_name(token_id: int) -> str:
    return f"tok{token_id}"


def domain_names(spec: SynthSpec) -> List[str]:
    return [f"source{j}" for j in range(spec.num_sources)] + [TARGET_NAME]


def synth_vocabulary(spec: SynthSpec) -> Vocabulary:
    """Identity vocabulary: token id i is feature i"""
    return Vocabulary([token_name(i) for i in range(spec.vocab_size)])


def _polar_halves(block: range) -> Tuple[np.ndarray, np.ndarray]:
    ids = np.arange(block.start, block.stop)
    return ids[:(ids.size + 1) // 2], ids[ids.size // 2:]


class _DomainSampler:
    """Token sampler for one domain"""

    def __init__(self, spec: SynthSpec, domain: int, rng: np.random.Generator):
        self.spec = spec
        self.domain = domain
        self.rng = rng
        self.shared_pos, self.shared_neg = _polar_halves(spec.shared_block())
        self.private_halves = [_polar_halves(spec.private_block(d)) for d in range(spec.num_domains)]
        self.signs = spec.signs

        self.borrow_from: List[int] = []
        if domain == spec.num_sources:
            self.borrow_from = [j for j, sign in enumerate(spec.source_signs) if sign == spec.target_sign]

    def _private_token(self, polarity: int) -> int:
        block = self.domain
        if self.borrow_from and self.rng.random() < self.spec.target_affinity:
            block = self.borrow_from[self.rng.integers(len(self.borrow_from))]
        positive, negative = self.private_halves[block]
        pool = positive if polarity * self.signs[block] > 0 else negative
        return int(pool[self.rng.integers(pool.size)])

    def _shared_token(self, polarity: int) -> int:
        consistent = self.rng.random() < self.spec.shared_purity
        pool = self.shared_pos if (polarity > 0) == consistent else self.shared_neg
        return int(pool[self.rng.integers(pool.size)])

    def document(self) -> RawExample:
        spec = self.spec
        label = SentimentLabel(int(self.rng.integers(2)))
        polarity = 1 if label == SentimentLabel.POSITIVE else -1
        length = max(1, int(self.rng.poisson(spec.mean_tokens)))

        tokens = np.empty(length, dtype=np.int64)
        for i in range(length):
            if self.rng.random() < spec.noise_rate:
                tokens[i] = self.rng.integers(spec.vocab_size)
            elif spec.private_size > 0 and self.rng.random() < spec.private_weight:
                tokens[i] = self._private_token(polarity)
            else:
                tokens[i] = self._shared_token(polarity)

        ids, counts = np.unique(tokens, return_counts=True)
        return RawExample(
            counts={token_name(int(t)): int(c) for t, c in zip(ids, counts)},
            label=label,
        )


def synth_documents(spec: SynthSpec) -> List[List[RawExample]]:
    """Labeled documents per domain, sources first then the target"""
    rng = np.random.default_rng(spec.seed)
    corpora = []
    for domain in range(spec.num_domains):
        sampler = _DomainSampler(spec, domain, rng)
        corpora.append([sampler.document() for _ in range(spec.docs_per_domain)])
    logger.info(f"🧪 Generated {spec.num_domains} synthetic domains × {spec.docs_per_domain} documents "
                f"(signs={spec.signs}, seed={spec.seed})")
    return corpora


def generate_dataset(spec: SynthSpec) -> Tuple[DatasetBundle, Vocabulary]:
    """Bundle with the target's labels moved to the sealed side channel"""
    documents = synth_documents(spec)
    vocabulary = synth_vocabulary(spec)
    names = domain_names(spec)
    corpora = [vectorize_corpus(docs, vocabulary, names[d], d) for d, docs in enumerate(documents)]
    target = corpora[-1]
    bundle = DatasetBundle(
        sources=corpora[:-1],
        target=target.without_labels(),
        sealed_target_labels=target.labels.copy(),
    )
    return bundle, vocabulary


def synth_generate(spec: SynthSpec) -> DatasetBundle:
    return generate_dataset(spec)[0]


# ============================================================================
# FILE OUTPUT
# ============================================================================

SPEC_FILE = "synth_spec.json"
RUN_CONFIG_FILE = "run_config.json"


def write_synthetic(spec: SynthSpec, out_dir: Path) -> Dict[str, Path]:
    """
    Write one corpus file per domain (the target without labels), the sealed
    target label sidecar, the generator spec and a run-config template.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"Cannot create output directory {out_dir}: {e}")

    documents = synth_documents(spec)
    names = domain_names(spec)
    written: Dict[str, Path] = {}
    try:
        for name, docs in zip(names, documents):
            path = out_dir / f"{name}.review"
            write_blitzer(path, docs, include_labels=name != TARGET_NAME)
            written[name] = path
        labels_path = out_dir / f"{TARGET_NAME}.labels"
        write_label_sidecar(labels_path, [int(doc.label) for doc in documents[-1]])
        written["labels"] = labels_path
    except OSError as e:
        raise ConfigurationError(f"Cannot write synthetic corpora to {out_dir}: {e}")

    root = out_dir.resolve()
    domains = {name: {"labeled": [str(root / f"{name}.review")]} for name in names[:-1]}
    domains[TARGET_NAME] = {
        "unlabeled": [str(root / f"{TARGET_NAME}.review")],
        "labels": str(root / f"{TARGET_NAME}.labels"),
    }
    written["spec"] = write_json(out_dir / SPEC_FILE, spec)
    written["config"] = write_json(out_dir / RUN_CONFIG_FILE, {
        "domains": domains,
        "target": TARGET_NAME,
        "vocab_size": spec.vocab_size,
        "seed": spec.seed,
    })
    logger.info(f"💾 Synthetic corpora written to {out_dir} ({len(names)} domains + sealed labels)")
    return written
