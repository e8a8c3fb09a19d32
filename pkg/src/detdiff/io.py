"""CSV/JSON output with a reproducibility header.

Every file carries the tool version and a hash of the resolved run
configuration.  Nothing time- or host-dependent is written, so identical
configurations give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

TOOL = "detdiff"


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def metadata(command: str, config: dict) -> dict:
    return {"tool": TOOL, "version": __version__, "command": command,
            "config_hash": config_hash(config), "config": _plain(config)}


def fmt(v, digits: int = 17) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.{digits}g}"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def csv_text(meta: dict, columns, rows, digits: int = 17) -> str:
    lines = [f"# tool: {meta['tool']} {meta['version']}",
             f"# command: {meta['command']}",
             f"# config_hash: {meta['config_hash']}",
             f"# config: {canonical_json(meta['config'])}",
             ",".join(columns)]
    for r in rows:
        lines.append(",".join(fmt(v, digits) for v in r))
    return "\n".join(lines) + "\n"


def write_csv(path, meta: dict, columns, rows, digits: int = 17):
    _atomic_write(Path(path), csv_text(meta, columns, rows, digits))


def read_csv(path) -> tuple[dict, list, list]:
    """(header comments as dict, column names, rows as lists of strings)."""
    meta, cols, rows = {}, None, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(":")
                meta[key.strip()] = val.strip()
                continue
            if not line.strip():
                continue
            rec = next(csv.reader([line]))
            if cols is None:
                cols = [c.strip() for c in rec]
            else:
                rows.append(rec)
    if cols is None:
        raise ValueError(f"{path}: no header row")
    return meta, cols, rows


def read_columns(path, names=None) -> dict:
    """Numeric columns of a CSV written by this tool (or any headed CSV)."""
    _, cols, rows = read_csv(path)
    names = names or cols
    out = {}
    for nm in names:
        if nm not in cols:
            raise ValueError(f"{path}: missing column {nm!r}")
        j = cols.index(nm)
        try:
            out[nm] = np.array([float(r[j]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed value in column {nm!r}") from exc
    return out


def write_json(path, meta: dict, payload: dict):
    doc = {"meta": meta, **_plain(payload)}
    _atomic_write(Path(path), json.dumps(doc, sort_keys=True, indent=2) + "\n")
