"""CSV and JSON writers.

Every CSV starts with a ``#`` comment line carrying the resolved config, then
a header row.  Floats are written with 17 significant digits so files round
trip exactly; nothing time-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"output directory {path} is not writable: {exc}") from exc
    return path


def write_csv(path, columns: list[str], rows, config: dict) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# chainqfi {__version__} config={json.dumps(_jsonable(config), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path, payload: dict, config: dict) -> Path:
    path = Path(path)
    doc = {"chainqfi_version": __version__, "config": config, **payload}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path):
    """Read a CSV written by :func:`write_csv` into ``(config, columns, rows)``."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ConfigurationError(f"{path} lacks the config comment line")
        config = json.loads(first.split("config=", 1)[1])
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [row for row in reader]
    return config, columns, rows
