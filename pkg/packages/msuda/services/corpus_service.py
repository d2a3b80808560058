"""
Corpus Service
Blitzer-style `token:count` corpora: parsing, label sidecars, vocabulary
construction, log-count vectorization into CSR matrices and seeded splits.
"""

import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from models.data_models import UNLABELED, Corpus, FeatureVector, RawExample, SentimentLabel, Vocabulary
from utils.errors import ConfigurationError, DataFormatError

logger = logging.getLogger(__name__)

LABEL_TOKEN = "#label#"
ENCODING = "utf-8"
ENCODING_ERRORS = "surrogateescape"  # tokens are arbitrary non-whitespace bytes

_COUNT = re.compile(r"[0-9]+")
_WHITESPACE = re.compile(r"[ \t\n\r\f\v]+")  # ASCII only; other code points belong to tokens
ASCII_WHITESPACE = " \t\n\r\f\v"

SPLIT_NAMES = ("train", "val", "test")


# ============================================================================
# PARSING
# ============================================================================

def parse_blitzer_line(line: str, path: Optional[str] = None, line_number: Optional[int] = None) -> RawExample:
    """One document: whitespace-separated token:count pairs, optional final #label#:polarity"""
    pairs = [pair for pair in _WHITESPACE.split(line) if pair]
    counts: Counter = Counter()
    label = None

    for position, pair in enumerate(pairs):
        token, sep, value = pair.rpartition(":")
        if not sep or not token:
            raise DataFormatError(f"malformed pair {pair!r} (expected token:count)", path, line_number)

        if token == LABEL_TOKEN:
            if position != len(pairs) - 1:
                raise DataFormatError(f"{LABEL_TOKEN} must be the final pair", path, line_number)
            try:
                label = SentimentLabel.parse(value)
            except KeyError:
                raise DataFormatError(f"unknown label {value!r} (expected positive or negative)", path, line_number)
            continue

        if ":" in token:
            raise DataFormatError(f"token {token!r} contains ':'", path, line_number)
        if not _COUNT.fullmatch(value) or int(value) <= 0:
            raise DataFormatError(f"count {value!r} for token {token!r} is not a positive integer", path, line_number)
        counts[token] += int(value)

    return RawExample(counts=dict(counts), label=label)


def parse_blitzer_lines(lines: Iterable[str], path: Optional[str] = None) -> List[RawExample]:
    examples = []
    for line_number, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip(ASCII_WHITESPACE):
            logger.warning(f"⚠️ {path or '<lines>'}:{line_number}: empty line skipped")
            continue
        examples.append(parse_blitzer_line(line, path, line_number))
    return examples


def parse_blitzer(path: Path) -> List[RawExample]:
    """Parse one corpus file; unlabeled lines yield examples with label None"""
    path = Path(path)
    try:
        text = path.read_bytes().decode(ENCODING, errors=ENCODING_ERRORS)
    except OSError as e:
        raise ConfigurationError(f"Cannot read corpus file {path}: {e}")

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    examples = parse_blitzer_lines(lines, str(path))
    labeled = sum(1 for example in examples if example.label is not None)
    logger.info(f"📄 Parsed {path.name}: {len(examples)} documents ({labeled} labeled)")
    return examples


def load_corpus_files(paths: Sequence[Path], workers: int = 4) -> List[RawExample]:
    """Parse several files on a thread pool; examples keep file order, then line order"""
    paths = list(paths)
    if len(paths) <= 1 or workers <= 1:
        parsed = [parse_blitzer(path) for path in paths]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(paths))) as pool:
            parsed = list(pool.map(parse_blitzer, paths))
    return [example for examples in parsed for example in examples]


def read_label_sidecar(path: Path) -> List[SentimentLabel]:
    """One polarity per line, aligned with the documents of the matching corpus"""
    labels = []
    text = Path(path).read_text(encoding=ENCODING)
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip(ASCII_WHITESPACE):
            continue
        try:
            labels.append(SentimentLabel.parse(line))
        except KeyError:
            raise DataFormatError(f"unknown label {line.strip()!r}", str(path), line_number)
    return labels


def write_label_sidecar(path: Path, labels: Iterable[int]):
    with open(path, "w", encoding=ENCODING, newline="\n") as handle:
        for label in labels:
            handle.write(f"{SentimentLabel(int(label)).text}\n")


def attach_labels(examples: List[RawExample], labels: Sequence[SentimentLabel], path: Path) -> List[RawExample]:
    if len(labels) != len(examples):
        raise DataFormatError(f"{len(labels)} labels for {len(examples)} documents", str(path))
    return [RawExample(counts=example.counts, label=label) for example, label in zip(examples, labels)]


def format_blitzer_line(example: RawExample, include_label: bool = True) -> str:
    parts = [f"{token}:{count}" for token, count in example.counts.items()]
    if include_label and example.label is not None:
        parts.append(f"{LABEL_TOKEN}:{example.label.text}")
    return " ".join(parts)


def write_blitzer(path: Path, examples: Iterable[RawExample], include_labels: bool = True):
    with open(path, "w", encoding=ENCODING, errors=ENCODING_ERRORS, newline="\n") as handle:
        for example in examples:
            handle.write(format_blitzer_line(example, include_labels) + "\n")


# ============================================================================
# VOCABULARY AND VECTORIZATION
# ============================================================================

def build_vocabulary(corpora: Sequence[Sequence[RawExample]], size: int = 5000) -> Vocabulary:
    """Top-`size` tokens by total count across all corpora; ties break lexicographically"""
    if not corpora:
        raise ConfigurationError("build_vocabulary needs at least one corpus")

    totals: Counter = Counter()
    for corpus in corpora:
        for example in corpus:
            totals.update(example.counts)

    ranked = sorted(totals.items(), key=lambda item: (-item[1], item[0]))
    if len(ranked) < size:
        logger.warning(f"⚠️ Only {len(ranked)} distinct tokens available; vocabulary smaller than {size}")
    vocabulary = Vocabulary([token for token, _ in ranked[:size]])
    logger.info(f"📚 Vocabulary built: {len(vocabulary)} tokens from {len(corpora)} corpora")
    return vocabulary


def vectorize(example: RawExample, vocabulary: Vocabulary) -> FeatureVector:
    """Drop out-of-vocabulary tokens and map counts through ln(1 + x)"""
    pairs = sorted(
        (vocabulary.index[token], count)
        for token, count in example.counts.items()
        if token in vocabulary.index
    )
    indices = np.array([i for i, _ in pairs], dtype=np.int64)
    counts = np.array([c for _, c in pairs], dtype=np.float64)
    return FeatureVector(indices, np.log1p(counts))


def vectorize_corpus(examples: Sequence[RawExample], vocabulary: Vocabulary, name: str, domain: int) -> Corpus:
    indptr = [0]
    indices: List[np.ndarray] = []
    values: List[np.ndarray] = []
    for example in examples:
        vector = vectorize(example, vocabulary)
        indices.append(vector.indices)
        values.append(vector.counts)
        indptr.append(indptr[-1] + len(vector))

    features = sp.csr_matrix(
        (
            np.concatenate(values) if values else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.array(indptr, dtype=np.int64),
        ),
        shape=(len(examples), len(vocabulary)),
    )
    labels = np.array(
        [UNLABELED if example.label is None else int(example.label) for example in examples],
        dtype=np.int64,
    )
    return Corpus(name=name, domain=domain, features=features, labels=labels)


# ============================================================================
# SPLITS
# ============================================================================

def split_indices(n: int, fractions: Sequence[float], seed: int, min_per_split: int = 1) -> List[np.ndarray]:
    """
    Seeded shuffle, then contiguous slices sized by `fractions`.
    Sizes are floored and the leftover rows go to the largest remainders, earlier parts first on ties.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"Split fractions must be non-negative and sum to 1, got {fractions}")

    quotas = n * np.asarray(fractions)
    sizes = np.floor(quotas).astype(np.int64)
    leftover = n - int(sizes.sum())
    by_remainder = np.argsort(-(quotas - sizes), kind="stable")
    sizes[by_remainder[:leftover]] += 1
    sizes = sizes.tolist()

    for fraction, size in zip(fractions, sizes):
        if fraction > 0 and size < min_per_split:
            raise DataFormatError(
                f"Corpus of {n} examples is too small for split {fractions} "
                f"(needs at least {min_per_split} per non-empty part)"
            )

    order = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    return [order[bounds[i]:bounds[i + 1]] for i in range(len(sizes))]


def split(corpus: Corpus, fractions: Sequence[float], seed: int) -> List[Corpus]:
    parts = split_indices(len(corpus), fractions, seed)
    names = SPLIT_NAMES if len(parts) == len(SPLIT_NAMES) else [f"part{i}" for i in range(len(parts))]
    return [corpus.subset(rows, f"{corpus.name}.{name}") for rows, name in zip(parts, names)]


def load_corpus(
        paths: Sequence[Path],
        vocabulary: Vocabulary,
        name: str,
        domain: int,
        labels_path: Optional[Path] = None,
        workers: int = 4
) -> Corpus:
    """Parse and vectorize corpus files against an existing vocabulary"""
    examples = load_corpus_files(paths, workers)
    if labels_path is not None:
        examples = attach_labels(examples, read_label_sidecar(labels_path), labels_path)

    total = sum(sum(example.counts.values()) for example in examples)
    covered = sum(
        count for example in examples for token, count in example.counts.items() if token in vocabulary.index
    )
    if total and covered == 0:
        raise ConfigurationError(
            f"None of the tokens in {[str(p) for p in paths]} occur in the vocabulary; "
            f"the corpus was not produced with this checkpoint's feature space"
        )
    if total:
        logger.info(f"Vocabulary covers {covered / total:.1%} of token occurrences in '{name}'")
    return vectorize_corpus(examples, vocabulary, name, domain)
