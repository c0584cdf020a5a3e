"""
Unit-interval stepping of dX(t) = X(t-1) dW(t) on a delay-aligned grid.

With ``h = 1/N`` the delay is exactly ``N`` steps, so the delayed diffusion
coefficient at step ``k`` of the interval [t, t+1] is the input segment's
value at grid index ``k``.  The Euler-Maruyama recursion

    x_0 = seg(0),    x_{k+1} = x_k + seg[k] * dW_k,   k = 0..N-1

is then a cumulative sum and the whole interval is advanced in one numpy
call.  Every array-level function here works along the last axis, so a
stack of replicas of shape ``(R, N + 1)`` advances in lock-step.

Random numbers come from :class:`NoiseStream`, a counter-based Philox
stream: block ``p`` of replica ``r`` under master seed ``s`` is generated
from the Philox key ``SeedSequence(s, spawn_key=(r,)).generate_state(2)``
with counter ``(0, 0, p, 0)``.  Any block can therefore be regenerated from
``(seed, replica, position)`` alone, without replaying the stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.signal import lfilter

from .segment import (
    ResolutionMismatchError,
    Segment,
    SegmentError,
    UnitSegment,
    ZeroStateError,
    project_values,
)

__all__ = [
    "NoiseStream",
    "NoiseBlock",
    "PathState",
    "ExtinctStateError",
    "draw_noise",
    "advance_values",
    "advance_coupled_values",
    "advance_unit",
    "advance_unit_renormalized",
    "advance_coupled_unit",
]


class ExtinctStateError(SegmentError):
    """The advanced segment is numerically zero and cannot be renormalized."""


class NoiseStream:
    """Reproducible source of standard normal blocks for one replica.

    Parameters
    ----------
    seed : int
        Master seed of the experiment.
    replica : int
        Replica index; distinct replicas get statistically independent keys.
    position : int
        Index of the next block :func:`draw_noise` will return.
    """

    def __init__(self, seed: int, replica: int = 0, position: int = 0):
        if seed < 0 or replica < 0 or position < 0:
            raise ValueError("seed, replica and position must be nonnegative")
        self.seed = int(seed)
        self.replica = int(replica)
        self.position = int(position)
        self._key = SeedSequence(self.seed, spawn_key=(self.replica,)).generate_state(2, np.uint64)
        self._bitgen = Philox(key=self._key)
        self._gen = Generator(self._bitgen)

    def standard_normal(self, position: int, shape) -> np.ndarray:
        """Standard normals of block ``position`` (does not move the stream)."""
        state = self._bitgen.state
        state["state"]["counter"] = np.array([0, 0, position, 0], dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        self._bitgen.state = state
        return self._gen.standard_normal(shape)

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, replica={self.replica}, position={self.position})"


@dataclass(frozen=True, eq=False)
class NoiseBlock:
    """Brownian increments over one unit interval.

    ``increments`` has shape ``(N,)`` or ``(R, N)``; each entry is N(0, 1/N).
    """

    increments: np.ndarray
    seed: int = -1
    replica: int = -1
    position: int = -1

    def __post_init__(self):
        dW = np.array(self.increments, dtype=float)
        if dW.ndim < 1 or dW.shape[-1] < 2:
            raise ValueError("noise block needs at least 2 increments")
        if not np.all(np.isfinite(dW)):
            raise ValueError("noise increments must be finite")
        dW.setflags(write=False)
        object.__setattr__(self, "increments", dW)

    @property
    def resolution(self) -> int:
        return self.increments.shape[-1]

    @classmethod
    def zeros(cls, N: int) -> "NoiseBlock":
        return cls(np.zeros(N))


def draw_noise(stream: NoiseStream, N: int, size: int | None = None) -> NoiseBlock:
    """Draw the next block of ``N`` increments of variance ``1/N``.

    With ``size`` given, the block holds ``size`` independent rows (an
    ensemble sharing one stream position).
    """
    if N < 2:
        raise ValueError(f"resolution must be at least 2, got {N}")
    shape = (N,) if size is None else (int(size), N)
    z = stream.standard_normal(stream.position, shape)
    block = NoiseBlock(z * np.sqrt(1.0 / N), stream.seed, stream.replica, stream.position)
    stream.position += 1
    return block


def advance_values(v: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """Euler-Maruyama over one unit interval, array version.

    ``v`` has shape ``(..., N + 1)``, ``dW`` shape ``(..., N)``.  Returns the
    new segment values; element 0 equals ``v[..., -1]``.
    """
    steps = v[..., :-1] * dW
    return np.cumsum(np.concatenate((v[..., -1:], steps), axis=-1), axis=-1)


def advance_coupled_values(z: np.ndarray, dW: np.ndarray, lam: float, rho: int) -> np.ndarray:
    """One unit interval of dZ = Z(t-1) dW - lam*rho*Z dt, array version.

    Exponential Euler with a variance-matched noise term::

        z_{k+1} = a z_k + c z[k] dW_k,   a = exp(-lam h),
        c = sqrt((1 - a^2) / (2 lam h))

    so that the conditional variance of each step equals that of the exact
    variation-of-constants solution with the delayed coefficient frozen over
    the step.  ``c -> 1`` as ``lam h -> 0``.  With rho = 0 or lam = 0 this
    is exactly :func:`advance_values`.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if rho not in (0, 1):
        raise ValueError("rho must be 0 or 1")
    if rho == 0 or lam == 0:
        return advance_values(z, dW)
    N = dW.shape[-1]
    lh = lam / N
    decay = np.exp(-lh)
    u = z[..., :-1] * dW * np.sqrt(-np.expm1(-2.0 * lh) / (2.0 * lh))
    out, _ = lfilter([1.0], [1.0, -decay], u, axis=-1, zi=decay * z[..., -1:])
    return np.concatenate((z[..., -1:], out), axis=-1)


def _check_pair(seg: Segment, noise: NoiseBlock):
    if noise.increments.ndim != 1:
        raise ValueError("segment stepping takes a single-row noise block")
    if seg.resolution != noise.resolution:
        raise ResolutionMismatchError(
            f"segment has N={seg.resolution}, noise has N={noise.resolution}")


def advance_unit(seg: Segment, noise: NoiseBlock) -> Segment:
    """Advance the segment X_t to X_{t+1}."""
    _check_pair(seg, noise)
    return Segment(advance_values(seg.values, noise.increments))


@dataclass(frozen=True)
class PathState:
    """Renormalized state: X_t = exp(log_scale) * segment."""

    segment: UnitSegment
    log_scale: float = 0.0
    t: int = 0

    @classmethod
    def start(cls, eta: Segment) -> "PathState":
        unit, log_norm = project_values(eta.values)
        return cls(UnitSegment(unit), float(log_norm), 0)

    def log_m2_norm(self) -> float:
        return self.log_scale

    def log_sup_norm(self) -> float:
        return self.log_scale + float(np.log(np.max(np.abs(self.segment.values))))

    def unnormalized(self) -> Segment:
        """X_t itself; may overflow for long horizons."""
        return Segment(np.exp(self.log_scale) * self.segment.values)


def advance_unit_renormalized(state: PathState, noise: NoiseBlock) -> PathState:
    """Advance one unit interval and factor the M2 norm into ``log_scale``."""
    new = advance_unit(state.segment, noise)
    try:
        unit, log_norm = project_values(new.values)
    except ZeroStateError:
        raise ExtinctStateError(f"state became zero at t={state.t + 1}") from None
    return PathState(UnitSegment(unit), state.log_scale + float(log_norm), state.t + 1)


def advance_coupled_unit(x: Segment, z: Segment, noise: NoiseBlock, lam: float, rho: int):
    """Advance the pair (X, Z = X - Y) of the coupled system over one interval.

    X follows the uncontrolled equation; Z receives the feedback drift
    ``-lam * rho * Z``.  Y is recovered as ``X - Z``.

    Returns
    -------
    (Segment, Segment)
        The advanced X and Z segments.
    """
    _check_pair(x, noise)
    _check_pair(z, noise)
    dW = noise.increments
    return (Segment(advance_values(x.values, dW)),
            Segment(advance_coupled_values(z.values, dW, lam, rho)))
