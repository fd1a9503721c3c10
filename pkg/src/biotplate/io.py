"""Deterministic JSON and CSV writers.

Floats are written with ``repr`` (shortest round-trip form), keys are sorted
and lines end with ``\\n``, so identical data gives identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InputError, SchemaViolation


def to_jsonable(obj):
    """Recursively convert numpy containers and scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not np.isfinite(v):
            return None
        return 0.0 if v == 0.0 else v
    return obj


def write_json(path: str | Path, obj) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    p.write_text(text + "\n", encoding="utf-8")
    return p


def read_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file {str(p)!r} not found", "file-not-found")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{p.name}: invalid JSON ({exc.msg})") from None


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return repr(0.0 if f == 0.0 else f)
    return str(v)


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    """RFC-4180 style CSV with '.' decimals and no locale dependence."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return p


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def mesh_field_dump(mesh, fields: dict) -> dict:
    """Mesh JSON field format: the mesh plus named raw field arrays."""
    return {"mesh": mesh.to_dict(), "fields": {k: np.asarray(v) for k, v in fields.items()}}
