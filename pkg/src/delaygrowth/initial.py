"""
Named initial segments.

Descriptors::

    const:c     eta(s) = c
    linear      eta(s) = s
    cos:k       eta(s) = cos(2 pi k s)
    saw         sign-changing sawtooth with two teeth, values in [-1, 1)
    file:path   grid sample read from a text/CSV file or a .npy array;
                resampled linearly onto the requested grid if needed
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .segment import Segment


class InitialConditionError(ValueError):
    pass


def _saw(s):
    return 2.0 * np.mod(2.0 * (s + 1.0), 1.0) - 1.0


def _load(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise InitialConditionError(f"initial-condition file not found: {path}")
    if p.suffix == ".npy":
        return np.load(p).astype(float).ravel()
    text = p.read_text().replace(",", " ").split()
    try:
        return np.array([float(t) for t in text])
    except ValueError as exc:
        raise InitialConditionError(f"cannot parse {path}: {exc}") from None


def make_eta(spec: str, N: int) -> Segment:
    """Build the initial segment named by ``spec`` on a grid of ``N`` steps."""
    if N < 2:
        raise InitialConditionError("N must be at least 2")
    kind, _, arg = spec.partition(":")
    s = np.linspace(-1.0, 0.0, N + 1)
    try:
        if kind == "const":
            v = np.full(N + 1, float(arg))
        elif kind == "linear" and not arg:
            v = s.copy()
        elif kind == "cos":
            v = np.cos(2.0 * np.pi * float(arg) * s)
        elif kind == "saw" and not arg:
            v = _saw(s)
        elif kind == "file":
            raw = _load(arg)
            if raw.size < 2:
                raise InitialConditionError(f"{arg}: need at least 2 values")
            v = raw if raw.size == N + 1 else np.interp(s, np.linspace(-1, 0, raw.size), raw)
        else:
            raise InitialConditionError(f"unknown initial condition {spec!r}")
    except ValueError as exc:
        if isinstance(exc, InitialConditionError):
            raise
        raise InitialConditionError(f"bad initial condition {spec!r}: {exc}") from None
    if not np.all(np.isfinite(v)):
        raise InitialConditionError(f"initial condition {spec!r} is not finite")
    if not np.any(v):
        raise InitialConditionError(f"initial condition {spec!r} is identically zero")
    return Segment(v)
