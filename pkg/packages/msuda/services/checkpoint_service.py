"""
Checkpoint Service
Parameter container (.npz, one array per block), manifest and vocabulary.
"""

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import orjson

from models.data_models import Vocabulary
from models.result_models import CheckpointManifest
from services.network import SharedPrivateModel
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PARAMS_FILE = "params.npz"
MANIFEST_FILE = "manifest.json"
VOCABULARY_FILE = "vocabulary.txt"
_VERSION_KEY = "__format_version__"


@dataclass
class LoadedCheckpoint:
    model: SharedPrivateModel
    manifest: CheckpointManifest
    vocabulary: Vocabulary

    @property
    def source_names(self) -> List[str]:
        return self.manifest.domain_names[:-1]


def write_vocabulary(path: Path, vocabulary: Vocabulary):
    with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="\n") as handle:
        for token in vocabulary.tokens:
            handle.write(f"{token}\n")


def read_vocabulary(path: Path) -> Vocabulary:
    with open(path, "r", encoding="utf-8", errors="surrogateescape", newline="\n") as handle:
        return Vocabulary([line.rstrip("\n") for line in handle])


def save_checkpoint(
        directory: Path,
        model: SharedPrivateModel,
        vocabulary: Vocabulary,
        domain_names: List[str],
        framework: str,
        state: Optional[Dict[str, np.ndarray]] = None
) -> Path:
    """Write params.npz, manifest.json and vocabulary.txt; `state` overrides the live parameters"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    if len(domain_names) != model.config.num_domains:
        raise ConfigurationError(
            f"{len(domain_names)} domain names for a model with {model.config.num_domains} domains"
        )

    arrays = dict(state) if state is not None else model.state_dict()
    arrays[_VERSION_KEY] = np.array(FORMAT_VERSION, dtype=np.int64)
    with open(directory / PARAMS_FILE, "wb") as handle:
        np.savez(handle, **arrays)

    manifest = CheckpointManifest(
        format_version=FORMAT_VERSION,
        model=model.config,
        domain_names=list(domain_names),
        vocabulary_sha256=vocabulary.sha256,
        framework=framework,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    (directory / MANIFEST_FILE).write_bytes(orjson.dumps(manifest.model_dump(mode="json"), option=orjson.OPT_INDENT_2))
    write_vocabulary(directory / VOCABULARY_FILE, vocabulary)

    logger.info(f"💾 Checkpoint written to {directory} ({len(arrays) - 1} parameter blocks)")
    return directory


def load_checkpoint(directory: Path) -> LoadedCheckpoint:
    directory = Path(directory)
    for name in (PARAMS_FILE, MANIFEST_FILE, VOCABULARY_FILE):
        if not (directory / name).is_file():
            raise ConfigurationError(f"Checkpoint {directory} is missing {name}")

    manifest = CheckpointManifest.model_validate(orjson.loads((directory / MANIFEST_FILE).read_bytes()))
    if manifest.format_version != FORMAT_VERSION:
        raise ConfigurationError(
            f"Checkpoint format {manifest.format_version} is not supported (expected {FORMAT_VERSION})"
        )

    vocabulary = read_vocabulary(directory / VOCABULARY_FILE)
    if vocabulary.sha256 != manifest.vocabulary_sha256:
        raise ConfigurationError(
            f"Vocabulary file in {directory} does not match the manifest hash; the checkpoint is inconsistent"
        )

    model = SharedPrivateModel(manifest.model)
    with np.load(directory / PARAMS_FILE, allow_pickle=False) as stored:
        state = {key: stored[key] for key in stored.files if key != _VERSION_KEY}
    model.load_state_dict(state)

    logger.info(f"📂 Loaded {manifest.framework} checkpoint from {directory} "
                f"(K={manifest.model.num_sources}, target={manifest.domain_names[-1]})")
    return LoadedCheckpoint(model=model, manifest=manifest, vocabulary=vocabulary)
