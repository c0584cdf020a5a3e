"""
Second-moment checks for the delay equation.

Three independent routes to E[X(t)^2]:

* :func:`ito_second_moment` -- the continuous-time value from the Ito
  isometry, m(t) = m(n) + int_n^t m(s - 1) ds, solved exactly as a
  piecewise polynomial for a constant initial segment.
* :func:`scheme_second_moments` -- the exact expectation of the discrete
  Euler-Maruyama recursion, E x_{k+1}^2 = E x_k^2 + h E y_k^2.  Its gap to
  the continuous value is the weak bias of the scheme.
* :func:`mc_second_moments` -- plain Monte Carlo over replicas.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .integrator import NoiseStream, advance_values
from .segment import Segment


def ito_second_moment(t: float, c: float = 1.0) -> float:
    """E[X(t)^2] for the initial segment eta == c, exactly.

    On [n, n+1] the moment is c^2 p_n(t - n) with p_0(u) = 1 + u and
    p_n(u) = p_{n-1}(1) + int_0^u p_{n-1}.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = int(np.floor(t))
    p = Polynomial([1.0, 1.0])
    for _ in range(n):
        p = p(1.0) + p.integ()
    return float(c * c * p(t - n))


def scheme_second_moments(eta: Segment, n_intervals: int) -> np.ndarray:
    """Exact E[x^2] of the Euler-Maruyama scheme at every grid point.

    Returns an array of shape ``(n_intervals + 1, N + 1)``; row ``n`` holds
    the second moments over [n - 1, n], row 0 is ``eta**2``.
    """
    m = eta.values ** 2
    h = eta.h
    rows = [m]
    for _ in range(n_intervals):
        m = np.concatenate(([m[-1]], m[-1] + h * np.cumsum(m[:-1])))
        rows.append(m)
    return np.array(rows)


@dataclass(frozen=True)
class MomentEstimate:
    t: int
    resolution_N: int
    replicas: int
    estimate: float
    standard_error: float
    ito_value: float | None
    scheme_value: float


def _ensemble_heads(eta, n_intervals, replicas, seed, chunk, eta_fine=None):
    """Squared heads x(n)^2, n = 1..n_intervals, for every replica.

    With ``eta_fine`` (the same initial segment on a grid twice as fine) a
    second ensemble is run on the refined grid, driven by the same Brownian
    path: coarse increments are sums of consecutive fine ones.
    """
    N = eta.resolution
    refine = 1 if eta_fine is None else eta_fine.resolution // N
    Nf = N * refine
    stream = NoiseStream(seed, replica=0)
    coarse = np.empty((replicas, n_intervals))
    fine = np.empty((replicas, n_intervals)) if refine > 1 else None
    for c, r0 in enumerate(range(0, replicas, chunk)):
        r1 = min(r0 + chunk, replicas)
        x = np.tile(eta.values, (r1 - r0, 1))
        xf = np.tile(eta_fine.values, (r1 - r0, 1)) if refine > 1 else None
        for n in range(n_intervals):
            z = stream.standard_normal(c * n_intervals + n, (r1 - r0, Nf))
            dWf = z * np.sqrt(1.0 / Nf)
            dW = dWf.reshape(r1 - r0, N, refine).sum(axis=2) if refine > 1 else dWf
            x = advance_values(x, dW)
            coarse[r0:r1, n] = x[:, -1] ** 2
            if refine > 1:
                xf = advance_values(xf, dWf)
                fine[r0:r1, n] = xf[:, -1] ** 2
    return coarse, fine


def mc_second_moments(eta: Segment, n_intervals: int, replicas: int, seed: int,
                      chunk: int = 25_000) -> list[MomentEstimate]:
    """Monte Carlo estimates of E[X(n)^2], n = 1..n_intervals."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    N = eta.resolution
    heads, _ = _ensemble_heads(eta, n_intervals, replicas, seed, chunk)
    scheme = scheme_second_moments(eta, n_intervals)[:, -1]
    const = bool(np.all(eta.values == eta.values[0]))
    out = []
    for n in range(n_intervals):
        col = heads[:, n]
        out.append(MomentEstimate(
            t=n + 1, resolution_N=N, replicas=replicas,
            estimate=float(col.mean()),
            standard_error=float(col.std(ddof=1) / np.sqrt(replicas)),
            ito_value=ito_second_moment(n + 1, eta.values[0]) if const else None,
            scheme_value=float(scheme[n + 1]),
        ))
    return out


def refinement_study(c: float, N: int, n_intervals: int, replicas: int, seed: int,
                     chunk: int = 25_000) -> dict:
    """Compare E[X(n)^2] at step 1/N and 1/(2N) on a shared Brownian path.

    The constant initial segment ``c`` is sampled on both grids.  Returns
    coarse and fine Monte Carlo means for the last interval, the mean and
    standard error of the paired difference (fine - coarse), and the exact
    scheme biases at both resolutions.
    """
    eta_c = Segment.constant(c, N)
    eta_f = Segment.constant(c, 2 * N)
    coarse, fine = _ensemble_heads(eta_c, n_intervals, replicas, seed, chunk, eta_fine=eta_f)
    exact = ito_second_moment(n_intervals, c)
    diff = fine[:, -1] - coarse[:, -1]
    return {
        "t": n_intervals,
        "ito_value": exact,
        "coarse_N": N,
        "fine_N": 2 * N,
        "coarse_mean": float(coarse[:, -1].mean()),
        "fine_mean": float(fine[:, -1].mean()),
        "diff_mean": float(diff.mean()),
        "diff_se": float(diff.std(ddof=1) / np.sqrt(replicas)),
        "coarse_scheme_bias": float(scheme_second_moments(eta_c, n_intervals)[-1, -1] - exact),
        "fine_scheme_bias": float(scheme_second_moments(eta_f, n_intervals)[-1, -1] - exact),
    }
