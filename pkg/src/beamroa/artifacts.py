"""CSV and JSON writers shared by the optimizer, simulator and CLI."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__

ARTIFACT_VERSION = f"beamroa {__version__}"


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_plain) + "\n"


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(payload))
    return path


def write_csv(path, columns, rows, artifact: str) -> Path:
    """CSV with a version comment line, then the column header, then rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# {ARTIFACT_VERSION} artifact={artifact}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    """Inverse of :func:`write_csv`: returns ``(version_line, columns, rows)``."""
    with Path(path).open(newline="") as fh:
        version = fh.readline().rstrip("\n")
        r = csv.reader(fh)
        columns = next(r)
        rows = [row for row in r]
    return version, columns, rows


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v
