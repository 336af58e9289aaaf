"""Deterministic JSON and CSV emission."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
SIG_DIGITS = 12


def normalize(obj):
    """Recursively convert to JSON-ready values with floats at 12 significant digits.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``
    so the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        y = float(f"{x:.{SIG_DIGITS}g}")
        return 0.0 if y == 0 else y
    if isinstance(obj, complex):
        return [normalize(obj.real), normalize(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "as_dict"):
        return normalize(obj.as_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(normalize(obj), sort_keys=True, indent=2) + "\n"


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _cell(v):
    v = normalize(v)
    return repr(v) if isinstance(v, float) else v


def emit_report(results: dict, out_dir=None, name: str = "report", table=None, stream=None) -> list[Path]:
    """Write ``<name>.json`` (and ``<name>.csv`` for a ``(header, rows)`` table) into ``out_dir``.

    Without ``out_dir`` the JSON goes to ``stream``.
    """
    text = dumps(results)
    written = []
    if out_dir is None:
        if stream is not None:
            stream.write(text)
        return written
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / f"{name}.json"
    p.write_text(text)
    written.append(p)
    if table is not None:
        header, rows = table
        q = out / f"{name}.csv"
        q.write_text(table_csv(header, rows))
        written.append(q)
    return written
