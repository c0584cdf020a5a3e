"""
Asymptotic coupling of two solutions driven by the same noise.

The controlled system is

    dX(t) = X(t-1) dW(t)
    dY(t) = Y(t-1) dW(t) + lam * rho(t) * (X(t) - Y(t)) dt

with rho constant on each [n, n+1).  We integrate X and the difference
Z = X - Y, which solves dZ = Z(t-1) dW - lam*rho*Z dt, and recover Y as
X - Z.  The switch rho is 1 on [n, n+1) exactly when

    A_n = {Y_n in B} and {Z_n in R}

where B holds segments bounded away from zero (min |f| >= max |f| / 2, no
zeros) and R holds segments whose head dominates (kappa ||f||_sup <= |f(0)|).

X and Z are renormalized separately, each with its own accumulated log
scale.  Z shrinks much faster than X once the coupling works, and a shared
scale would underflow it; the ratio ||Z|| / ||X|| is carried exactly as
exp(log_z - log_x).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrator import NoiseStream, advance_coupled_values, advance_values
from .output import rows_to_csv
from .segment import Segment, ZeroStateError, project_values

CLAMP_FACTOR = 1e-12
DEFAULT_KAPPA = 0.05
DEFAULT_LAMBDA = 64.0
DEFAULT_LAMBDA_GRID = (4.0, 16.0, 64.0, 256.0)


def _vals(seg) -> np.ndarray:
    return np.asarray(seg.values if isinstance(seg, Segment) else seg, dtype=float)


def in_B(seg) -> bool:
    """Segment has no zero on the grid and min |f| >= max |f| / 2."""
    a = np.abs(_vals(seg))
    lo = a.min()
    return bool(lo > 0 and lo >= 0.5 * a.max())


def in_R(seg, kappa: float) -> bool:
    """kappa * sup |f| <= |f(0)|."""
    v = _vals(seg)
    return bool(kappa * np.abs(v).max() <= abs(v[-1]))


def r_of_lambda(lam: float, kappa: float) -> float:
    """r(lam) = 2 / (kappa^2 lam); the contraction bound on A_n is 2 sqrt(r)."""
    if lam <= 0 or kappa <= 0:
        raise ValueError("lambda and kappa must be positive")
    return 2.0 / (kappa * kappa * lam)


@dataclass(frozen=True)
class CouplingConfig:
    eta: Segment
    phi: Segment
    lam: float = DEFAULT_LAMBDA
    kappa: float = DEFAULT_KAPPA
    T: int = 500
    seed: int = 0
    replica: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.eta.resolution != self.phi.resolution:
            raise ValueError("eta and phi must share a grid")

    @property
    def N(self) -> int:
        return self.eta.resolution


TRACE_COLUMNS = ("n", "log_z_norm", "z_norm", "log_x_norm", "y_in_B", "z_in_R",
                 "a_event", "rho", "girsanov_increment", "clamp_flag")


@dataclass(frozen=True, eq=False)
class CouplingTrace:
    """Per-interval record of a coupled run.

    ``log_z_norm`` and ``log_x_norm`` have T + 1 entries (times 0..T); the
    remaining columns have T entries, one per interval [n, n + 1).
    ``girsanov_increment`` is the trapezoidal value of
    int_n^{n+1} rho lam^2 Z(t)^2 / Y(t-1)^2 dt.
    """

    config: CouplingConfig
    log_z_norm: np.ndarray
    log_x_norm: np.ndarray
    y_in_B: np.ndarray
    z_in_R: np.ndarray
    a_event: np.ndarray
    rho: np.ndarray
    girsanov_increment: np.ndarray
    clamp_flag: np.ndarray
    final_x: np.ndarray = field(repr=False)
    final_z: np.ndarray = field(repr=False)

    def __len__(self):
        return self.rho.size

    @property
    def z_norm_m2(self) -> np.ndarray:
        return np.exp(self.log_z_norm)

    def to_rows(self) -> list[dict]:
        """One dict per interval n = 0..T-1; norms are taken at the start of the interval."""
        return [{"n": n, "log_z_norm": float(self.log_z_norm[n]),
                 "z_norm": float(np.exp(self.log_z_norm[n])),
                 "log_x_norm": float(self.log_x_norm[n]),
                 "y_in_B": bool(self.y_in_B[n]), "z_in_R": bool(self.z_in_R[n]),
                 "a_event": bool(self.a_event[n]), "rho": int(self.rho[n]),
                 "girsanov_increment": float(self.girsanov_increment[n]),
                 "clamp_flag": bool(self.clamp_flag[n])} for n in range(len(self))]

    def to_csv(self) -> str:
        return rows_to_csv(self.to_rows(), TRACE_COLUMNS)


def _trapz(v: np.ndarray) -> float:
    N = v.size - 1
    return float((v.sum() - 0.5 * (v[0] + v[-1])) / N)


def run_coupling(config: CouplingConfig) -> CouplingTrace:
    """Simulate the controlled pair for ``config.T`` unit intervals.

    At each integer time n the event A_n is read off (Y_n, Z_n), rho is set
    for the coming interval, and X and Z are advanced on the same Brownian
    block (stream ``(seed, replica)``, block n).
    """
    cfg = config
    try:
        x, lx = project_values(cfg.eta.values)
    except ZeroStateError:
        raise ZeroStateError("eta is zero") from None
    try:
        z, lz = project_values(cfg.eta.values - cfg.phi.values)
    except ZeroStateError:
        raise ValueError("eta and phi coincide; Z starts at zero") from None
    T, N, lam = cfg.T, cfg.N, float(cfg.lam)
    stream = NoiseStream(cfg.seed, cfg.replica)
    sqrt_h = np.sqrt(1.0 / N)

    log_z = np.empty(T + 1)
    log_x = np.empty(T + 1)
    yB = np.zeros(T, dtype=bool)
    zR = np.zeros(T, dtype=bool)
    rho = np.zeros(T, dtype=np.int8)
    cost = np.zeros(T)
    clamp = np.zeros(T, dtype=bool)
    merged = False

    for n in range(T):
        log_x[n], log_z[n] = lx, lz
        ratio = np.exp(lz - lx)  # ||Z|| / ||X||, may underflow to 0
        y = x - ratio * z
        yB[n] = in_B(y)
        zR[n] = in_R(z, cfg.kappa)
        rho[n] = int(yB[n] and zR[n])
        dW = stream.standard_normal(n, N) * sqrt_h
        xn = advance_values(x, dW)
        zn = advance_coupled_values(z, dW, lam, int(rho[n]))
        if rho[n] and lam > 0:
            denom = y * y
            floor = CLAMP_FACTOR * denom.max()
            clamp[n] = bool(np.any(denom < floor))
            num = (ratio * zn) ** 2
            cost[n] = lam * lam * _trapz(num / np.maximum(denom, floor))
        x, step = project_values(xn)
        lx += float(step)
        if merged or not np.any(zn):
            merged = True
            z, lz = np.zeros(N + 1), -np.inf
        else:
            z, step = project_values(zn)
            lz += float(step)
        if not (np.isfinite(lx) and (merged or np.isfinite(lz))):
            raise OverflowError(f"log scale left the representable range at n={n + 1}")
    log_x[T], log_z[T] = lx, lz
    return CouplingTrace(cfg, log_z, log_x, yB, zR, yB & zR, rho, cost, clamp, x, z)


def _traces(trace_or_traces) -> list[CouplingTrace]:
    if isinstance(trace_or_traces, CouplingTrace):
        return [trace_or_traces]
    traces = list(trace_or_traces)
    if not traces:
        raise ValueError("no traces given")
    return traces


def _slope(log_norms: np.ndarray) -> float:
    ok = np.isfinite(log_norms)
    if ok.sum() < 2:
        return float("nan")
    n = np.arange(log_norms.size)
    return float(np.polyfit(n[ok], log_norms[ok], 1)[0])


def contraction_stats(trace) -> dict:
    """Decay rate of ||Z_n|| and its one-step ratios on and off A_n.

    ``slope`` is the least-squares slope of n -> log ||Z_n||_M2.  The
    conditional ratios are sample means of ||Z_{n+1}|| / ||Z_n|| over the
    intervals where A_n held (``on_A``) or failed (``off_A``); they are NaN
    when no such interval exists, and ``events`` reports how many A_n
    occurred.

    Several traces (replicas of one configuration) may be passed; the slope
    is then the mean of the per-trace slopes and the ratio averages pool all
    intervals.
    """
    traces = _traces(trace)
    if min(len(t) for t in traces) < 100:
        raise ValueError("trace too short for contraction statistics (need >= 100)")
    slopes, on_r, off_r = [], [], []
    for tr in traces:
        lz = tr.log_z_norm
        ok = np.isfinite(lz)
        step_ok = ok[:-1] & ok[1:]
        ratios = np.exp(np.diff(np.where(ok, lz, 0.0)))
        slopes.append(_slope(lz))
        on_r.append(ratios[tr.a_event & step_ok])
        off_r.append(ratios[~tr.a_event & step_ok])
    on_r, off_r = np.concatenate(on_r), np.concatenate(off_r)
    lam, kappa = traces[0].config.lam, traces[0].config.kappa
    return {
        "lambda": float(lam),
        "kappa": float(kappa),
        "replicas": len(traces),
        "slope": float(np.mean(slopes)),
        "slope_se": float(np.std(slopes, ddof=1) / np.sqrt(len(slopes))) if len(slopes) > 1 else float("nan"),
        "conditional_ratio_on_A": float(on_r.mean()) if on_r.size else float("nan"),
        "conditional_ratio_off_A": float(off_r.mean()) if off_r.size else float("nan"),
        "events": int(sum(t.a_event.sum() for t in traces)),
        "intervals": int(sum(len(t) for t in traces)),
        "bound_on_A": float(2.0 * np.sqrt(r_of_lambda(lam, kappa))) if lam > 0 else float("inf"),
        "bound_off_A": float(2.0 * np.sqrt(2.0)),
    }


def waiting_time_stats(trace, k_max: int | None = None, z: float = 1.96) -> dict:
    """Gaps between successive A_n events and their geometric tail.

    Returns the gaps, the empirical survival P(gap > k) for k = 0..k_max,
    the geometric rate p = 1 / mean(gap) with a normal-approximation
    confidence interval (``z`` standard errors), and the smallest constant
    C such that P(gap > k) <= C (1 - p)^k for every k: the linear upper
    envelope of the log-tail with the fitted slope log(1 - p).  Gaps of
    several traces are pooled.
    """
    gaps = np.concatenate([np.diff(np.flatnonzero(t.a_event)) for t in _traces(trace)])
    if gaps.size < 10:
        raise ValueError(f"only {gaps.size} gaps between A-events; need at least 10")
    if k_max is None:
        k_max = int(gaps.max())
    ks = np.arange(k_max + 1)
    survival = (gaps[None, :] > ks[:, None]).mean(axis=1)
    p = 1.0 / gaps.mean()
    se = p * np.sqrt((1.0 - p) / gaps.size)
    if p < 1:
        slope = float(np.log1p(-p))
        pos = survival > 0
        c = float(np.max(np.exp(np.log(survival[pos]) - slope * ks[pos])))
    else:
        slope, c = -np.inf, 1.0
    return {
        "gaps": gaps,
        "k": ks,
        "survival": survival,
        "rate": float(p),
        "rate_se": float(se),
        "rate_ci": (float(p - z * se), float(p + z * se)),
        "log_slope": slope,
        "envelope_constant": c,
    }


def girsanov_cost(trace, tail_fraction: float = 0.2) -> dict:
    """Accumulated int rho lam^2 Z^2(t) / Y^2(t-1) dt and its late-time share.

    The tail is the sum over the last ``tail_fraction`` of the intervals.
    For several traces, totals and tails are summed.
    """
    traces = _traces(trace)
    total = tail = 0.0
    rho_steps = clamps = 0
    for tr in traces:
        inc = tr.girsanov_increment
        start = inc.size - int(round(tail_fraction * inc.size))
        total += float(inc.sum())
        tail += float(inc[start:].sum())
        rho_steps += int(tr.rho.sum())
        clamps += int(tr.clamp_flag.sum())
    return {
        "total": total,
        "tail": tail,
        "tail_share": tail / total if total > 0 else 0.0,
        "rho_steps": rho_steps,
        "clamp_events": clamps,
        "clamp_share": clamps / rho_steps if rho_steps else 0.0,
    }


def ci_overlap(intervals) -> bool:
    """True if all the (lo, hi) intervals share a common point."""
    lo = max(i[0] for i in intervals)
    hi = min(i[1] for i in intervals)
    return bool(lo <= hi)


def perturbed(eta: Segment, eps: float, perturbation: Segment | None = None) -> Segment:
    """Second initial condition near ``eta``.

    Without ``perturbation`` returns eta * (1 + eps); otherwise
    eta + eps * perturbation.
    """
    if perturbation is None:
        return Segment(eta.values * (1.0 + eps))
    return Segment(eta.values + eps * perturbation.values)


def run_replicas(eta: Segment, phi: Segment, lam: float, *, kappa: float = DEFAULT_KAPPA,
                 T: int = 500, seed: int = 0, replicas=(0,)) -> list[CouplingTrace]:
    return [run_coupling(CouplingConfig(eta, phi, lam, kappa, T, seed, r)) for r in replicas]


def lambda_sweep(eta: Segment, phi: Segment, lambdas=DEFAULT_LAMBDA_GRID, *,
                 kappa: float = DEFAULT_KAPPA, T: int = 500, seed: int = 0,
                 replicas=(0,)) -> list[dict]:
    """One row of coupling statistics per lambda.

    Every lambda reuses the same replica streams, so differences between
    rows come from lambda and not from the noise.
    """
    rows = []
    for lam in lambdas:
        traces = run_replicas(eta, phi, lam, kappa=kappa, T=T, seed=seed, replicas=replicas)
        row = contraction_stats(traces)
        w = waiting_time_stats(traces)
        row.update({"wait_rate": w["rate"], "wait_rate_lo": w["rate_ci"][0],
                    "wait_rate_hi": w["rate_ci"][1],
                    "wait_envelope_constant": w["envelope_constant"]})
        row.update({f"girsanov_{k}": v for k, v in girsanov_cost(traces).items()})
        rows.append(row)
    return rows


def kappa_sweep(eta: Segment, phi: Segment, kappas, *, lam: float = DEFAULT_LAMBDA,
                T: int = 500, seed: int = 0, replicas=(0,)) -> list[dict]:
    """A_n frequency and contraction statistics for each kappa."""
    rows = []
    for kappa in kappas:
        traces = run_replicas(eta, phi, lam, kappa=kappa, T=T, seed=seed, replicas=replicas)
        row = contraction_stats(traces)
        row["event_fraction"] = float(np.mean([t.a_event.mean() for t in traces]))
        rows.append(row)
    return rows


def monotone_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))
