"""
Estimating the exponential growth rate of the delay equation.

Two estimators run on the same simulated path:

* direct -- the per-unit-time increments of log ||X_n|| (M2 or sup norm),
  averaged after burn-in;
* Furstenberg -- the time average of psi(S_t) = f(S_t)/2 - g(S_t)^2/4 over
  the sphere process S_t = X_t / ||X_t||_M2, sampled at every grid time.

Their difference on a single path is the martingale term
(1/2) int g(S_t) dW / T, which vanishes as T grows.  Standard errors come
from batch means over the per-interval series.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .integrator import ExtinctStateError, NoiseStream, advance_values
from .segment import Segment, ZeroStateError, project_values

METHODS = ("direct_m2", "direct_sup", "furstenberg")
DEFAULT_BURN_IN = 50
DEFAULT_BATCHES = 20


def batch_means_ci(series, batches: int = DEFAULT_BATCHES):
    """Mean of a stationary series and its batch-means standard error.

    The series is cut into ``batches`` contiguous blocks of equal length
    (a remainder at the start is dropped from the blocks but not from the
    mean); the standard error is the sample standard deviation of the block
    means divided by sqrt(batches).

    Returns
    -------
    mean : float
    standard_error : float
    """
    x = np.asarray(series, dtype=float).ravel()
    if batches < 2:
        raise ValueError("need at least 2 batches")
    if x.size < 2 * batches:
        raise ValueError(f"series of length {x.size} too short for {batches} batches")
    size = x.size // batches
    blocks = x[x.size - size * batches:].reshape(batches, size).mean(axis=1)
    return float(x.mean()), float(blocks.std(ddof=1) / np.sqrt(batches))


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    standard_error: float
    batch_count: int
    horizon_T: int
    resolution_N: int
    method: str
    seed: int
    replica: int
    burn_in: int
    initial_condition_label: str

    def exceeds_upper_bound(self, k: float = 3.0) -> bool:
        """True if the estimate sits more than k standard errors above 1/2."""
        return self.estimate - k * self.standard_error > 0.5


REPORT_COLUMNS = tuple(f.name for f in fields(EstimateReport))


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
    return buf.getvalue()


@dataclass(frozen=True)
class GrowthPath:
    """Per-interval series of one or more replicas (leading axis)."""

    log_m2: np.ndarray        # (R, T + 1): log ||X_n||_M2
    log_sup: np.ndarray       # (R, T + 1): log ||X_n||_sup
    psi_mean: np.ndarray      # (R, T): grid average of psi(S_t) over [n, n + 1)
    martingale: np.ndarray    # (R, T): (1/2) sum g(S_t) dW over [n, n + 1)
    final: np.ndarray         # (R, N + 1): unit segment at time T
    segments: np.ndarray | None = None  # (R, T + 1, N + 1) when kept

    @property
    def horizon(self) -> int:
        return self.psi_mean.shape[1]


def _psi_on_windows(prev: np.ndarray, new: np.ndarray):
    """psi (and g) of the sphere process at grid times n + k h, k = 0..N-1.

    ``prev`` is X_n, ``new`` is X_{n+1}; both (R, N + 1) and sharing the
    point at time n.  The window ending at grid time n + k h is
    path[k : k + N + 1] of the concatenated path.
    """
    N = prev.shape[-1] - 1
    path = np.concatenate((prev, new[..., 1:]), axis=-1)
    win = sliding_window_view(path, N + 1, axis=-1)[..., :N, :]
    scale = np.max(np.abs(win), axis=-1, keepdims=True)
    u = win / scale
    sq = u * u
    m2sq = (sq.sum(axis=-1) - 0.5 * (sq[..., 0] + sq[..., -1])) / N + sq[..., -1]
    f = sq[..., -1] / m2sq
    g = 2.0 * u[..., -1] * u[..., 0] / m2sq
    return 0.5 * f - 0.25 * g * g, g


def simulate_growth(eta: Segment, T: int, seed: int, replicas=(0,),
                    keep_segments: bool = False) -> GrowthPath:
    """Run renormalized trajectories from ``eta`` for ``T`` unit intervals.

    ``replicas`` lists the stream indices; each replica uses
    ``NoiseStream(seed, replica)`` with block ``n`` driving interval [n, n+1).
    Replicas are stepped together as one array.  With ``keep_segments`` the
    unit segment S_n at every integer time is stored as well.
    """
    streams = [NoiseStream(seed, r) for r in replicas]
    R, N = len(streams), eta.resolution
    try:
        unit, log0 = project_values(np.tile(eta.values, (R, 1)))
    except ZeroStateError:
        raise ZeroStateError("initial segment is zero") from None
    log_m2 = np.empty((R, T + 1))
    log_sup = np.empty((R, T + 1))
    psi_mean = np.empty((R, T))
    mart = np.empty((R, T))
    segs = np.empty((R, T + 1, N + 1)) if keep_segments else None
    log_m2[:, 0] = log0
    log_sup[:, 0] = log0 + np.log(np.max(np.abs(unit), axis=-1))
    if keep_segments:
        segs[:, 0] = unit
    sqrt_h = np.sqrt(1.0 / N)
    for n in range(T):
        dW = np.stack([s.standard_normal(n, N) for s in streams]) * sqrt_h
        new = advance_values(unit, dW)
        psi, g = _psi_on_windows(unit, new)
        psi_mean[:, n] = psi.mean(axis=-1)
        mart[:, n] = 0.5 * np.sum(g * dW, axis=-1)
        try:
            unit, step = project_values(new)
        except ZeroStateError:
            raise ExtinctStateError(f"state became zero at t={n + 1}") from None
        log_m2[:, n + 1] = log_m2[:, n] + step
        log_sup[:, n + 1] = log_m2[:, n + 1] + np.log(np.max(np.abs(unit), axis=-1))
        if keep_segments:
            segs[:, n + 1] = unit
    return GrowthPath(log_m2, log_sup, psi_mean, mart, unit, segs)


def _check_horizon(T, burn_in, batches):
    if T < 100:
        raise ValueError(f"horizon T={T} too short (need T >= 100)")
    if batches < 10:
        raise ValueError("need at least 10 batches")
    if T - burn_in < 2 * batches:
        raise ValueError(f"T - burn_in = {T - burn_in} too short for {batches} batches")


def reports_from_path(path: GrowthPath, eta: Segment, seed: int, replicas, label: str = "",
                      burn_in: int = DEFAULT_BURN_IN, batches: int = DEFAULT_BATCHES,
                      methods=METHODS) -> list[EstimateReport]:
    """One report per (replica, method), all read off the same path."""
    T = path.horizon
    _check_horizon(T, burn_in, batches)
    series = {
        "direct_m2": np.diff(path.log_m2, axis=1)[:, burn_in:],
        "direct_sup": np.diff(path.log_sup, axis=1)[:, burn_in:],
        "furstenberg": path.psi_mean[:, burn_in:],
    }
    out = []
    for i, r in enumerate(replicas):
        for m in methods:
            est, se = batch_means_ci(series[m][i], batches)
            out.append(EstimateReport(est, se, batches, T, eta.resolution, m, seed, int(r),
                                      burn_in, label))
    return out


def run_direct(eta: Segment, T: int, seed: int, norm: str = "m2", *, replica: int = 0,
               burn_in: int = DEFAULT_BURN_IN, batches: int = DEFAULT_BATCHES,
               label: str = "") -> EstimateReport:
    """Growth rate from log-norm increments of a single trajectory.

    Parameters
    ----------
    eta : Segment
        Nonzero initial segment; its resolution sets the grid.
    T : int
        Horizon in unit intervals (>= 100).
    norm : {"m2", "sup"}
    """
    if norm not in ("m2", "sup"):
        raise ValueError(f"unknown norm {norm!r}")
    _check_horizon(T, burn_in, batches)
    path = simulate_growth(eta, T, seed, (replica,))
    return reports_from_path(path, eta, seed, (replica,), label, burn_in, batches,
                             methods=(f"direct_{norm}",))[0]


def run_furstenberg(eta: Segment, T: int, seed: int, *, replica: int = 0,
                    burn_in: int = DEFAULT_BURN_IN, batches: int = DEFAULT_BATCHES,
                    label: str = "") -> EstimateReport:
    """Growth rate as the time average of psi over the sphere process."""
    _check_horizon(T, burn_in, batches)
    path = simulate_growth(eta, T, seed, (replica,))
    return reports_from_path(path, eta, seed, (replica,), label, burn_in, batches,
                             methods=("furstenberg",))[0]


def run_all(eta: Segment, T: int, seed: int, replicas=(0,), *, burn_in: int = DEFAULT_BURN_IN,
            batches: int = DEFAULT_BATCHES, label: str = "") -> list[EstimateReport]:
    """All three estimators on shared paths, for several replicas."""
    _check_horizon(T, burn_in, batches)
    path = simulate_growth(eta, T, seed, tuple(replicas))
    return reports_from_path(path, eta, seed, tuple(replicas), label, burn_in, batches)


def pool(reports) -> EstimateReport:
    """Combine independent replica reports of one method into one estimate.

    The pooled estimate is the replica mean and its standard error
    sqrt(sum se_i^2) / R.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to pool")
    if len({r.method for r in reports}) != 1:
        raise ValueError("cannot pool reports of different methods")
    R = len(reports)
    est = float(np.mean([r.estimate for r in reports]))
    se = float(np.sqrt(np.sum([r.standard_error ** 2 for r in reports])) / R)
    r0 = reports[0]
    return EstimateReport(est, se, sum(r.batch_count for r in reports), r0.horizon_T,
                          r0.resolution_N, r0.method, r0.seed, -1, r0.burn_in,
                          r0.initial_condition_label)


def combined_se(a: EstimateReport, b: EstimateReport) -> float:
    return float(np.hypot(a.standard_error, b.standard_error))


def compare(a: EstimateReport, b: EstimateReport, k: float = 3.0) -> dict:
    diff = abs(a.estimate - b.estimate)
    se = combined_se(a, b)
    return {"a": a.initial_condition_label, "b": b.initial_condition_label,
            "method_a": a.method, "method_b": b.method,
            "difference": diff, "combined_se": se, "within": bool(diff <= k * se)}


def multi_eta_harness(etas, T: int, replicas: int, seed: int, *, labels=None,
                      common_noise: bool = False, method: str = "direct_m2",
                      burn_in: int = DEFAULT_BURN_IN, batches: int = DEFAULT_BATCHES):
    """Growth-rate estimates for several initial segments and their pairwise gaps.

    By default every (eta, replica) cell draws its own stream, replica index
    ``i * replicas + r`` for the i-th eta, so the per-eta estimates are
    independent.  ``common_noise=True`` reuses streams ``0..replicas-1`` for
    every eta.

    Returns
    -------
    reports : list of EstimateReport
        All per-replica reports (all methods).
    table : list of dict
        Pairwise comparison of the pooled ``method`` estimates against three
        combined standard errors.
    """
    etas = list(etas)
    if len(etas) < 2:
        raise ValueError("need at least two initial segments")
    labels = list(labels) if labels is not None else [f"eta{i}" for i in range(len(etas))]
    for e, lab in zip(etas, labels):
        if not np.any(e.values):
            raise ZeroStateError(f"initial segment {lab!r} is zero")
    reports, pooled = [], []
    for i, (eta, lab) in enumerate(zip(etas, labels)):
        base = 0 if common_noise else i * replicas
        reps = run_all(eta, T, seed, range(base, base + replicas), burn_in=burn_in,
                       batches=batches, label=lab)
        reports.extend(reps)
        pooled.append(pool(r for r in reps if r.method == method))
    table = [compare(a, b) for a, b in itertools.combinations(pooled, 2)]
    return reports, table
