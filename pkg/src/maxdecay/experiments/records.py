"""Deterministic JSON and CSV result records."""
from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

CSV_HEADER = ("experiment", "R", "theta", "quantity", "value")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def dumps_record(record: dict) -> str:
    """Sorted-key JSON with plain Python scalars; identical input gives identical text."""
    return json.dumps(_plain(record), sort_keys=True, indent=2) + "\n"


def write_json(record: dict, path) -> Path:
    path = Path(path)
    path.write_text(dumps_record(record))
    return path


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in np.asarray(v).reshape(-1).tolist())
    return str(v)


def dumps_rows(rows) -> str:
    """CSV text with a header; each row is ``(experiment, R, theta, quantity, value)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.write_text(dumps_rows(rows))
    return path
