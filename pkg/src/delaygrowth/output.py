"""Deterministic, all-or-nothing result writing."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; write them as strings
    if isinstance(o, float) and not np.isfinite(o):
        return repr(o)
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.generic):
        return _clean(o.item())
    return o


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_default) + "\n"


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


class OutputSet:
    """Collects output files and publishes them together.

    Files are staged in a temporary directory inside ``out_dir`` and moved
    into place by :meth:`commit`; if the run dies first, nothing appears
    under the final names.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise PermissionError(f"output directory {self.out_dir} is not writable")
        self._stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.names: list[str] = []

    def _check(self, name: str) -> Path:
        p = Path(name)
        if p.is_absolute() or ".." in p.parts or len(p.parts) != 1:
            raise ValueError(f"output name {name!r} must be a plain file name")
        self.names.append(name)
        return self._stage / name

    def text(self, name: str, content: str):
        self._check(name).write_text(content)

    def json(self, name: str, obj):
        self.text(name, dumps_json(obj))

    def npy(self, name: str, array: np.ndarray):
        with open(self._check(name), "wb") as fh:
            np.save(fh, array)

    def commit(self):
        for name in self.names:
            os.replace(self._stage / name, self.out_dir / name)
        self.discard()

    def discard(self):
        for p in self._stage.glob("*"):
            p.unlink()
        if self._stage.exists():
            self._stage.rmdir()
