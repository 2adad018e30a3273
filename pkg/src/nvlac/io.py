"""Deterministic, atomic CSV and JSON output."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _plain(obj):
    """Convert numpy scalars/arrays and tuples to JSON-ready builtins."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def json_text(payload: dict, header: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "header": header, **payload}
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def fmt(x) -> str:
    if isinstance(x, (str,)):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def csv_text(columns, rows, header: dict) -> str:
    """CSV with ``#``-prefixed header lines (one JSON-encoded key per line)."""
    lines = [f"# schema_version: {SCHEMA_VERSION}"]
    for key in sorted(header):
        lines.append(f"# {key}: {json.dumps(_plain(header[key]), sort_keys=True)}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def read_csv_columns(path):
    """Read a numeric CSV (``#`` comments allowed) into a dict of column arrays."""
    text = Path(path).read_text().splitlines()
    body = [ln for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise ValueError(f"{path}: no data")
    names = [c.strip() for c in body[0].split(",")]
    data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(names):
        raise ValueError(f"{path}: ragged rows")
    return {n: data[:, k] for k, n in enumerate(names)}
