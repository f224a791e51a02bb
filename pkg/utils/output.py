# utils/output.py
"""JSON and CSV emission with a versioned metadata header.

Documents carry no timestamps or host data, so identical inputs give
byte-identical files.
"""
import csv
import io
import json
import logging
import math
import sys
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from exceptions import ConfigurationError

logger = logging.getLogger(__name__)

CSV_SCHEMA_PREFIX = "# schema_version: "
CSV_METADATA_PREFIX = "# metadata: "


def sanitize(value: Any) -> Any:
    """Convert to plain JSON types; non-finite floats become strings."""
    if isinstance(value, BaseModel):
        return sanitize(value.model_dump(mode="python"))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(sanitize(k)): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return value
    return value


def build_document(command: str, config: Dict[str, Any], data: Any, schema_version: str, version: str,
                   constants: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    metadata = {"command": command, "config": config, "seed": config.get("seed"), "version": version,
                "constants": constants or {}}
    return {"schema_version": schema_version, "metadata": sanitize(metadata), "data": sanitize(data)}


def render_json(document: Dict[str, Any]) -> str:
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"


def render_csv(document: Dict[str, Any], rows: Sequence[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    buffer.write(f"{CSV_SCHEMA_PREFIX}{document['schema_version']}\n")
    buffer.write(f"{CSV_METADATA_PREFIX}{json.dumps(document['metadata'], sort_keys=True, separators=(',', ':'))}\n")
    rows = [sanitize(row) for row in rows]
    if rows:
        fieldnames: List[str] = list(rows[0].keys())
        writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in row.items()})
    return buffer.getvalue()


def emit(document: Dict[str, Any], rows: Optional[Sequence[Dict[str, Any]]], fmt: str,
         path: Optional[str] = None) -> str:
    """Render and write to ``path`` (stdout when None); returns the text written."""
    if fmt == "csv":
        if rows is None:
            raise ConfigurationError("this command produces a report; use --format json")
        text = render_csv(document, rows)
    else:
        text = render_json(document)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        logger.info(f"Wrote {fmt.upper()} output to {path}")
    return text


def read_document_config(path: str) -> Dict[str, Any]:
    """Experiment config from a JSON config file or from the metadata of an emitted file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e
    try:
        if text.startswith(CSV_SCHEMA_PREFIX):
            for line in text.splitlines():
                if line.startswith(CSV_METADATA_PREFIX):
                    return dict(json.loads(line[len(CSV_METADATA_PREFIX):])["config"])
            raise ConfigurationError(f"{path} has no metadata line")
        content = json.loads(text)
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigurationError(f"cannot parse config file {path}: {e}") from e
    if not isinstance(content, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    if "metadata" in content and "data" in content:
        return dict(content["metadata"].get("config", {}))
    return content
