"""File helpers shared by the command-line pipelines: hashing, JSON, CSV, manifests."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import platform
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__


class InputFormatError(OSError):
    """An input file exists but could not be parsed."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Key-sorted compact JSON, the form that gets hashed."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(cfg: Mapping) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: not valid JSON ({exc})") from exc


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], columns: Iterable) -> Path:
    """Write equally long columns under ``header``; floats use their shortest round-trip form."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c).tolist() if isinstance(c, np.ndarray) else list(c) for c in columns]
    if len(cols) != len(header) or len({len(c) for c in cols}) > 1:
        raise ValueError("columns do not match the header")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_cell(v) for v in row])
    return path


def read_table(path, required: Sequence[str] = (), optional: Sequence[str] = ()) -> dict:
    """Read a numeric CSV table into a dict of float arrays.

    Raises
    ------
    InputFormatError
        Missing required columns or non-numeric cells.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in required if c not in fields]
        if missing:
            raise InputFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        wanted = [c for c in (*required, *optional) if c in fields]
        rows = list(reader)
    out = {}
    for c in wanted:
        try:
            out[c] = np.array([float(r[c]) for r in rows])
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"{path}: column {c!r} is not numeric") from exc
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    return out


def utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def build_manifest(command: str, subcommand: str, config: Mapping, seed: int,
                   inputs: Sequence = (), outputs: Sequence = (), started: str | None = None) -> dict:
    """Provenance record; ``config`` plus ``seed`` are enough to rerun the command."""
    return {
        "manifest_version": 1,
        "tool": "nvpd",
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": command,
        "subcommand": subcommand,
        "config": _plain(config),
        "config_hash": config_hash(config),
        "seed": int(seed),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "started_utc": started or utc_now(),
        "finished_utc": utc_now(),
    }
