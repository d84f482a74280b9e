"""Deterministic table and JSON emission.

All emitted numbers go through :func:`format_float` (6 significant
digits) so re-running a pipeline with the same seed produces
byte-identical CSV/JSON bundles.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

SIG_DIGITS = 6


def format_float(x: float, digits: int = SIG_DIGITS) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.{digits}g}"
    # normalize "-0" so equal values always serialize identically
    if float(s) == 0.0:
        return "0"
    return s


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def round_for_json(obj: Any) -> Any:
    """Recursively replace floats with 6-significant-digit values."""
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return None
        return float(format_float(obj))
    if isinstance(obj, Mapping):
        return {str(k): round_for_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_for_json(v) for v in obj]
    return obj


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write rows atomically with canonical cell formatting and LF endings."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    os.replace(tmp, path)


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(round_for_json(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_hash(obj: Any) -> str:
    """Hash of the canonical JSON form of obj."""
    payload = json.dumps(round_for_json(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
