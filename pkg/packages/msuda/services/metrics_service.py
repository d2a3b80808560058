"""
Metrics Service
Line-delimited JSON streams for epoch metrics and pseudo-label rounds,
plus JSON report files written next to run outputs.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import orjson
from pydantic import BaseModel

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
PSEUDO_LABELS_FILE = "pseudo_labels.jsonl"
RESOLVED_CONFIG_FILE = "resolved_config.json"
REPORT_FILE = "report.json"

Record = Union[BaseModel, Dict[str, Any]]


def _as_dict(record: Record) -> Dict[str, Any]:
    return record.model_dump(mode="json") if isinstance(record, BaseModel) else record


class MetricsWriter:
    """Appends one JSON object per line; the file is truncated when the writer opens"""

    def __init__(self, path: Path, fields: Optional[List[str]] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fields = fields
        self.path.write_bytes(b"")
        self.count = 0

    def write(self, record: Record):
        data = _as_dict(record)
        if self.fields is not None:
            data = {key: data[key] for key in self.fields}
        with open(self.path, "ab") as handle:
            handle.write(orjson.dumps(data) + b"\n")
        self.count += 1

    __call__ = write


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    with open(path, "rb") as handle:
        return [orjson.loads(line) for line in handle if line.strip()]


def write_json(path: Path, data: Record) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(_as_dict(data), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: Path) -> Dict[str, Any]:
    return orjson.loads(Path(path).read_bytes())
