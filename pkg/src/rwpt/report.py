"""Versioned JSON report envelope shared by the command-line tools."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from typing import Any, Mapping

import numpy as np

from . import __version__, core

SCHEMA_VERSION = 1
PROVENANCE_TAGS = ("exact", "predicted", "mc", "fitted")


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples; non-finite
    floats become strings so the output stays strict JSON."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def canonical(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON of ``config`` without its timestamp."""
    clean = {k: v for k, v in config.items() if k != "timestamp"}
    return hashlib.sha256(canonical(clean).encode()).hexdigest()


def envelope(command: str, config: Mapping[str, Any], result: Mapping[str, Any],
             provenance: Mapping[str, str], passed: bool, seed: int | None = None,
             timestamp: str | None = None) -> dict:
    """Assemble a report.  ``provenance`` maps result keys to one of
    :data:`PROVENANCE_TAGS`."""
    bad = {k: v for k, v in provenance.items() if v not in PROVENANCE_TAGS}
    if bad:
        raise ValueError(f"unknown provenance tags {bad}")
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
    return to_jsonable({
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": dict(config),
        "config_hash": config_hash(config),
        "backend": core.BACKEND,
        "provenance": dict(provenance),
        "result": dict(result),
        "pass": bool(passed),
        "timestamp": timestamp,
    })


def dumps(report: Mapping[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
