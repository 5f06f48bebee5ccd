"""Deterministic JSON and CSV output.

JSON reports are written with sorted keys, fixed indentation and LF line
endings.  Non-finite floats become the strings ``"inf"``, ``"-inf"`` and
``"nan"``.  The only run-dependent value is ``header.timestamp``, so two
runs of the same scenario with the same seed differ in that key alone.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__

__all__ = ["sanitize", "dumps", "make_header", "write_json", "read_json",
           "write_csv", "csv_text", "strip_timestamp", "TIMESTAMP_KEY"]

TIMESTAMP_KEY = "timestamp"


def sanitize(obj: Any) -> Any:
    """Convert numpy values, tuples and non-finite floats to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(sanitize(obj), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def make_header(command: str, **info) -> dict:
    """Report header; the timestamp is the only non-deterministic entry."""
    stamp = os.environ.get("MUDICH_TIMESTAMP") or \
        datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    head = {"tool": "mudich", "version": __version__, "command": command,
            TIMESTAMP_KEY: stamp}
    head.update(info)
    return head


def write_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(payload))


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def strip_timestamp(text_or_obj):
    """Drop ``header.timestamp`` from a report (text or decoded)."""
    obj = json.loads(text_or_obj) if isinstance(text_or_obj, str) else dict(text_or_obj)
    if isinstance(obj.get("header"), dict):
        obj["header"] = {k: v for k, v in obj["header"].items() if k != TIMESTAMP_KEY}
    return obj


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """CSV with a header line (present even when ``rows`` is empty)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    v = sanitize(v)
    return repr(v) if isinstance(v, float) else v


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(csv_text(columns, rows))
