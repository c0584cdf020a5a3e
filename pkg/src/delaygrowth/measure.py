"""
Empirical picture of the invariant measure of the sphere process.

Snapshots S_n = X_n / ||X_n||_M2 are taken at integer times after a burn-in
and thinned.  From a :class:`SphereSampleSet` we read off coordinate
marginals, moduli of continuity (equicontinuity, hence tightness),
the spatial average of psi, and two-sample distances between sets started
from different initial segments.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .lyapunov import simulate_growth
from .segment import Segment, ZeroStateError, functional_g, functional_psi, m2_norm

DEFAULT_COORDS = (-1.0, -0.5, 0.0)
DEFAULT_BURN_IN = 200
DEFAULT_THIN = 5
SNAPSHOT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SphereSampleSet:
    """Unit-norm snapshots of one trajectory, one row per snapshot."""

    samples: np.ndarray
    coords: tuple = DEFAULT_COORDS
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] < 2:
            raise ValueError("samples must be a 2-d array (snapshots x grid points)")
        if s.shape[0]:
            err = np.max(np.abs(m2_norm(s) - 1.0))
            if err > SNAPSHOT_TOL:
                raise ValueError(f"snapshot off the unit sphere by {err:.3g}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def resolution(self) -> int:
        return self.samples.shape[1] - 1

    def coord_index(self, coord: float) -> int:
        if not -1.0 <= coord <= 0.0:
            raise ValueError(f"coordinate {coord} outside [-1, 0]")
        return int(round((coord + 1.0) * self.resolution))

    def marginal(self, coord: float) -> np.ndarray:
        return self.samples[:, self.coord_index(coord)]

    def thinned(self, thin: int) -> "SphereSampleSet":
        prov = dict(self.provenance)
        prov["thin"] = prov.get("thin", 1) * thin
        return SphereSampleSet(self.samples[::thin], self.coords, prov)

    def negated(self) -> "SphereSampleSet":
        return SphereSampleSet(-self.samples, self.coords, dict(self.provenance))


def sample_sphere_path(eta: Segment, T: int, *, burn_in: int = DEFAULT_BURN_IN,
                       thin: int = DEFAULT_THIN, seed: int = 0, replica: int = 0,
                       coords=DEFAULT_COORDS, label: str = "") -> SphereSampleSet:
    """Snapshots of S_n at n = burn_in, burn_in + thin, ..., <= T."""
    if not np.any(eta.values):
        raise ZeroStateError("initial segment is zero")
    if T <= burn_in:
        raise ValueError("T must exceed burn_in")
    if thin < 1:
        raise ValueError("thin must be positive")
    path = simulate_growth(eta, T, seed, (replica,), keep_segments=True)
    samples = path.segments[0, burn_in::thin]
    prov = {"eta": label, "seed": seed, "replica": replica, "T": T,
            "burn_in": burn_in, "thin": thin, "N": eta.resolution}
    return SphereSampleSet(samples, coords, prov)


def modulus_of_continuity(seg, delta: float):
    """max |f(t) - f(s)| over grid pairs with |t - s| <= delta.

    Accepts a segment or a stack of segment values (last axis).  For
    ``delta`` below the grid step the one-step modulus is returned with a
    warning.
    """
    v = np.asarray(seg.values if isinstance(seg, Segment) else seg, dtype=float)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    N = v.shape[-1] - 1
    lags = int(np.floor(delta * N + 1e-9))
    if lags < 1:
        warnings.warn(f"delta={delta} is below the grid step 1/{N}; using one step",
                      stacklevel=2)
        lags = 1
    out = np.zeros(v.shape[:-1])
    for m in range(1, lags + 1):
        out = np.maximum(out, np.max(np.abs(v[..., m:] - v[..., :-m]), axis=-1))
    return float(out) if out.ndim == 0 else out


def tightness_report(sset: SphereSampleSet, deltas=(1.0, 0.5, 0.25, 0.125),
                     epsilons=(0.5,)) -> dict:
    """Fraction of snapshots with modulus(S, delta) >= eps for each (delta, eps).

    ``table[i, j]`` belongs to ``deltas[i]`` and ``epsilons[j]``.
    """
    if len(sset) < 100:
        raise ValueError(f"need at least 100 snapshots, have {len(sset)}")
    deltas = tuple(float(d) for d in deltas)
    epsilons = tuple(float(e) for e in epsilons)
    table = np.empty((len(deltas), len(epsilons)))
    for i, d in enumerate(deltas):
        mod = modulus_of_continuity(sset.samples, d)
        for j, e in enumerate(epsilons):
            table[i, j] = np.mean(mod >= e)
    return {"deltas": deltas, "epsilons": epsilons, "table": table}


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    pts = np.concatenate((a, b))
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n: float, m: float, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value c(alpha) sqrt((n + m) / (n m))."""
    c = np.sqrt(-0.5 * np.log(alpha / 2.0))
    return float(c * np.sqrt((n + m) / (n * m)))


def marginal_distance(a: SphereSampleSet, b: SphereSampleSet, coord: float = 0.0) -> float:
    """KS distance between the coordinate marginals of two sample sets."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample set")
    if a.coords != b.coords:
        raise ValueError("sample sets use different coordinate lists")
    return ks_statistic(a.marginal(coord), b.marginal(coord))


def joint_energy_distance(a: SphereSampleSet, b: SphereSampleSet) -> float:
    """Energy distance between the joint laws of (s(-1), s(0))."""
    pa = a.samples[:, [0, -1]]
    pb = b.samples[:, [0, -1]]
    return float(2 * cdist(pa, pb).mean() - cdist(pa, pa).mean() - cdist(pb, pb).mean())


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    var = np.dot(x, x)
    if var == 0:
        return np.ones(max_lag + 1)
    return np.array([1.0] + [np.dot(x[:-k], x[k:]) / var for k in range(1, max_lag + 1)])


def choose_thin(x, threshold: float = 0.05, max_lag: int = 100) -> int:
    """Smallest lag at which the autocorrelation of ``x`` drops below ``threshold``."""
    ac = autocorrelation(x, min(max_lag, len(x) - 1))
    below = np.flatnonzero(np.abs(ac[1:]) < threshold)
    return int(below[0] + 1) if below.size else max_lag


def effective_sample_size(x, max_lag: int = 200) -> float:
    """n / (1 + 2 sum rho_k), summing until the first non-positive rho_k."""
    x = np.asarray(x, dtype=float)
    ac = autocorrelation(x, min(max_lag, len(x) - 1))[1:]
    stop = np.flatnonzero(ac <= 0)
    tau = 1.0 + 2.0 * ac[: stop[0] if stop.size else ac.size].sum()
    return float(x.size / tau)


def lambda_from_measure(sset: SphereSampleSet) -> float:
    """Average of psi = f/2 - g^2/4 over the snapshots."""
    if len(sset) == 0:
        raise ValueError("empty sample set")
    return float(np.mean(functional_psi(sset.samples)))


def g_second_moment(sset: SphereSampleSet) -> float:
    return float(np.mean(functional_g(sset.samples) ** 2))


def marginal_ranges(sset: SphereSampleSet) -> dict:
    """Observed range of each designated coordinate marginal."""
    return {c: (float(sset.marginal(c).min()), float(sset.marginal(c).max()))
            for c in sset.coords}


def save_sample_set(sset: SphereSampleSet, path) -> tuple[Path, Path]:
    """Write ``<path>.npy`` (snapshot matrix) and ``<path>.json`` (provenance)."""
    path = Path(path)
    npy, side = path.with_suffix(".npy"), path.with_suffix(".json")
    np.save(npy, sset.samples)
    side.write_text(json.dumps({"schema_version": 1, "coords": list(sset.coords),
                                "shape": list(sset.samples.shape),
                                "provenance": sset.provenance}, indent=2, sort_keys=True))
    return npy, side


def load_sample_set(path) -> SphereSampleSet:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    samples = np.load(path.with_suffix(".npy"))
    return SphereSampleSet(samples, tuple(meta["coords"]), meta["provenance"])
