"""
Segments of a path on [-1, 0] sampled on a uniform grid.

A :class:`Segment` holds the values ``v[0..N]`` of a function at the grid
points ``-1, -1 + h, ..., 0`` with ``h = 1/N``.  ``v[0]`` is the value at
``s = -1`` and ``v[N]`` the value at ``s = 0`` (the "head").

Three norms are provided:

* ``sup_norm``   -- max |v|
* ``l2_norm``    -- trapezoidal L2 norm on [-1, 0]
* ``m2_norm``    -- sqrt(v(0)^2 + ||v||_2^2), the Hilbert norm used for the
  sphere projection.

All norm functions accept either a :class:`Segment` or a raw array and
operate along the last axis, so they can be applied to a stack of replicas
at once.  Norms are computed on values rescaled by their maximum modulus,
so segments of size 1e-300 or 1e300 do not under/overflow.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = [
    "Segment",
    "UnitSegment",
    "SegmentError",
    "ResolutionMismatchError",
    "ZeroStateError",
    "sup_norm",
    "l2_norm_sq",
    "l2_norm",
    "m2_norm",
    "project",
    "functional_f",
    "functional_g",
    "functional_psi",
    "axpy",
]

UNIT_TOL = 1e-12


class SegmentError(ValueError):
    pass


class ResolutionMismatchError(SegmentError):
    """Raised when two segments on different grids are combined."""


class ZeroStateError(SegmentError):
    """Raised when a zero segment is projected to the unit sphere."""


@dataclass(frozen=True, eq=False)
class Segment:
    """Grid sample of a continuous path on [-1, 0].

    Parameters
    ----------
    values : array_like, shape (N + 1,)
        Values at ``-1, -1 + 1/N, ..., 0``.  Copied and made read-only.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise SegmentError("segment needs a 1-d array of at least 2 values")
        if not np.all(np.isfinite(v)):
            raise SegmentError("segment values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.size - 1

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def head(self) -> float:
        """Value at s = 0."""
        return float(self.values[-1])

    @property
    def tail(self) -> float:
        """Value at s = -1."""
        return float(self.values[0])

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(-1.0, 0.0, self.resolution + 1)

    @classmethod
    def constant(cls, c: float, N: int) -> "Segment":
        return cls(np.full(N + 1, float(c)))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], N: int) -> "Segment":
        s = np.linspace(-1.0, 0.0, N + 1)
        return cls(np.broadcast_to(np.asarray(fn(s), dtype=float), s.shape))

    def scaled(self, c: float) -> "Segment":
        return Segment(float(c) * self.values)

    def __neg__(self) -> "Segment":
        return Segment(-self.values)

    def __add__(self, other: "Segment") -> "Segment":
        return axpy(1.0, other, self)

    def __sub__(self, other: "Segment") -> "Segment":
        return axpy(-1.0, other, self)

    def __mul__(self, c: float) -> "Segment":
        return Segment(float(c) * self.values)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return self.resolution == other.resolution and bool(np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash(self.values.tobytes())

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"{type(self).__name__}(N={self.resolution}, head={self.head:.6g}, tail={self.tail:.6g})"


class UnitSegment(Segment):
    """A segment with unit M2 norm (relative tolerance 1e-12)."""

    def __post_init__(self):
        super().__post_init__()
        n = m2_norm(self.values)
        if abs(n - 1.0) > UNIT_TOL:
            raise SegmentError(f"unit segment has M2 norm {n!r}")


SegmentLike = Union[Segment, np.ndarray]


def _arr(seg) -> np.ndarray:
    return np.asarray(seg.values if isinstance(seg, Segment) else seg, dtype=float)


def _trapz_sq(v: np.ndarray) -> np.ndarray:
    # h * (v0^2/2 + v1^2 + ... + v_{N-1}^2 + vN^2/2) along the last axis
    N = v.shape[-1] - 1
    sq = v * v
    return (sq.sum(axis=-1) - 0.5 * (sq[..., 0] + sq[..., -1])) / N


def _scale(v: np.ndarray) -> np.ndarray:
    return np.max(np.abs(v), axis=-1)


def sup_norm(seg: SegmentLike):
    """Maximum absolute value."""
    out = _scale(_arr(seg))
    return float(out) if np.ndim(out) == 0 else out


def l2_norm_sq(seg: SegmentLike):
    """Squared L2 norm on [-1, 0] by the trapezoidal rule."""
    out = _trapz_sq(_arr(seg))
    return float(out) if np.ndim(out) == 0 else out


def _rescaled_norm(v: np.ndarray, head: bool) -> np.ndarray:
    s = _scale(v)
    safe = np.where(s > 0, s, 1.0)
    u = v / safe[..., None]
    q = _trapz_sq(u)
    if head:
        q = q + u[..., -1] ** 2
    return s * np.sqrt(q)


def l2_norm(seg: SegmentLike):
    out = _rescaled_norm(_arr(seg), head=False)
    return float(out) if np.ndim(out) == 0 else out


def m2_norm(seg: SegmentLike):
    """M2 norm: sqrt(v(0)^2 + trapezoidal integral of v^2)."""
    out = _rescaled_norm(_arr(seg), head=True)
    return float(out) if np.ndim(out) == 0 else out


def project_values(v: np.ndarray):
    """Array version of :func:`project`; works row-wise on stacks.

    Returns ``(unit, log_norm)``.  Raises :class:`ZeroStateError` if any
    row is identically zero.
    """
    v = np.asarray(v, dtype=float)
    s = _scale(v)
    if np.any(s == 0):
        raise ZeroStateError("cannot project the zero state")
    u = v / s[..., None]
    n = np.sqrt(_trapz_sq(u) + u[..., -1] ** 2)
    unit = u / n[..., None]
    return unit, np.log(s) + np.log(n)


def project(seg: Segment):
    """Split a nonzero segment into its M2-unit direction and log M2 norm.

    Returns
    -------
    unit : UnitSegment
    log_norm : float
    """
    unit, log_norm = project_values(_arr(seg))
    return UnitSegment(unit), float(log_norm)


def functional_f(s: SegmentLike):
    """f(s) = s(0)^2."""
    v = _arr(s)
    out = v[..., -1] ** 2
    return float(out) if np.ndim(out) == 0 else out


def functional_g(s: SegmentLike):
    """g(s) = 2 s(0) s(-1)."""
    v = _arr(s)
    out = 2.0 * v[..., -1] * v[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def functional_psi(s: SegmentLike):
    """psi = f/2 - g^2/4, the drift of log M2 norm on the unit sphere."""
    v = _arr(s)
    f = v[..., -1] ** 2
    g = 2.0 * v[..., -1] * v[..., 0]
    out = 0.5 * f - 0.25 * g * g
    return float(out) if np.ndim(out) == 0 else out


def axpy(a: float, x: Segment, y: Segment) -> Segment:
    """Return ``a * x + y``."""
    if x.resolution != y.resolution:
        raise ResolutionMismatchError(
            f"resolutions differ: {x.resolution} vs {y.resolution}")
    return Segment(a * x.values + y.values)
