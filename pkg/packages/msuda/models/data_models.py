"""
Corpus data structures
Sparse feature vectors, per-domain corpora and the multi-source bundle.
"""

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from utils.errors import ConfigurationError, DimensionError

UNLABELED = -1


class SentimentLabel(IntEnum):
    NEGATIVE = 0
    POSITIVE = 1

    @classmethod
    def parse(cls, text: str) -> "SentimentLabel":
        return cls[text.strip().upper()]

    @property
    def text(self) -> str:
        return self.name.lower()


@dataclass
class RawExample:
    """Token-count multiset as read from a corpus line"""
    counts: Dict[str, int]
    label: Optional[SentimentLabel] = None


@dataclass
class FeatureVector:
    """Sparse non-negative features over a fixed vocabulary"""
    indices: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.indices.shape != self.counts.shape:
            raise DimensionError(f"indices {self.indices.shape} and counts {self.counts.shape} differ")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("FeatureVector indices must be strictly increasing")
        if np.any(self.counts <= 0):
            raise ValueError("FeatureVector counts must be positive")

    def __len__(self) -> int:
        return int(self.indices.size)

    def densify(self, dim: int) -> np.ndarray:
        if self.indices.size and self.indices[-1] >= dim:
            raise DimensionError(f"index {self.indices[-1]} outside vocabulary of size {dim}")
        dense = np.zeros(dim, dtype=np.float64)
        dense[self.indices] = self.counts
        return dense


@dataclass
class Vocabulary:
    """Token → id mapping; ids follow frequency rank"""
    tokens: List[str]
    index: Dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("Vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def sha256(self) -> str:
        digest = hashlib.sha256()
        for token in self.tokens:
            digest.update(token.encode("utf-8", errors="surrogateescape"))
            digest.update(b"\n")
        return digest.hexdigest()


@dataclass
class Corpus:
    """One domain's examples as a CSR matrix; labels use -1 for unlabeled rows"""
    name: str
    domain: int
    features: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        self.features = sp.csr_matrix(self.features, dtype=np.float64)
        self.features.sum_duplicates()
        self.features.sort_indices()
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"Corpus '{self.name}': {self.features.shape[0]} rows but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    @property
    def is_fully_labeled(self) -> bool:
        return bool(len(self) and np.all(self.labels != UNLABELED))

    def subset(self, rows: np.ndarray, name: Optional[str] = None) -> "Corpus":
        rows = np.asarray(rows, dtype=np.int64)
        return Corpus(name or self.name, self.domain, self.features[rows], self.labels[rows])

    def without_labels(self) -> "Corpus":
        return Corpus(self.name, self.domain, self.features, np.full(len(self), UNLABELED))


@dataclass
class DomainLabeledUnion:
    """U: every example of every domain with its domain label"""
    features: sp.csr_matrix
    domains: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class DatasetBundle:
    """K labeled source corpora and one target corpus; domain index K is the target"""
    sources: List[Corpus]
    target: Corpus
    sealed_target_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.sources:
            raise ConfigurationError("A dataset bundle needs at least one source corpus")
        dims = {corpus.dim for corpus in self.sources} | {self.target.dim}
        if len(dims) != 1:
            raise DimensionError(f"Corpora disagree on feature dimension: {sorted(dims)}")
        for j, corpus in enumerate(self.sources):
            if corpus.domain != j:
                raise ValueError(f"Source '{corpus.name}' carries domain {corpus.domain}, expected {j}")
        if self.target.domain != self.num_sources:
            raise ValueError(f"Target carries domain {self.target.domain}, expected {self.num_sources}")
        if self.sealed_target_labels is not None and len(self.sealed_target_labels) != len(self.target):
            raise DimensionError("Sealed target labels do not match the target corpus size")

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def dim(self) -> int:
        return self.target.dim

    @property
    def domain_names(self) -> List[str]:
        return [corpus.name for corpus in self.sources] + [self.target.name]

    @property
    def n_source(self) -> int:
        return sum(len(corpus) for corpus in self.sources)

    @property
    def n_target(self) -> int:
        return len(self.target)

    @property
    def n_total(self) -> int:
        return self.n_source + self.n_target

    def union(self) -> DomainLabeledUnion:
        corpora = self.sources + [self.target]
        return DomainLabeledUnion(
            features=sp.vstack([corpus.features for corpus in corpora], format="csr"),
            domains=np.concatenate([np.full(len(corpus), corpus.domain, dtype=np.int64) for corpus in corpora]),
        )
