"""
Pulling a second solution onto the first.

Y starts next to X and receives the feedback lam * rho * (X - Y) dt, switched
on for a whole unit interval only when Y is bounded away from zero and the
gap Z = X - Y has a dominant head.  Stronger feedback should make log ||Z_n||
fall faster, the switching events should recur with geometric gaps whatever
lam is, and the total control effort (the Girsanov integral) should stay
finite.
"""
import numpy as np

from delaygrowth import Segment
from delaygrowth.coupling import (
    girsanov_cost, lambda_sweep, perturbed, r_of_lambda, run_replicas, waiting_time_stats,
)

N, KAPPA = 64, 0.05
eta = Segment.constant(1.0, N)
phi = perturbed(eta, 1e-6)

rows = lambda_sweep(eta, phi, (4, 16, 64, 256), kappa=KAPPA, T=500, seed=2026,
                    replicas=range(4))
print(" lambda   slope    on-A ratio  bound   off-A ratio  wait rate")
for r in rows:
    print(f"{r['lambda']:7.0f} {r['slope']:+.4f}   {r['conditional_ratio_on_A']:.4f}"
          f"    {2 * np.sqrt(r_of_lambda(r['lambda'], KAPPA)):.2f}   {r['conditional_ratio_off_A']:.4f}"
          f"       {r['wait_rate']:.4f}")

traces = run_replicas(eta, phi, 64.0, kappa=KAPPA, T=500, seed=2026, replicas=range(4))
w = waiting_time_stats(traces)
print("P(gap > k), k = 0..10:", np.round(w["survival"][:11], 3))
print("geometric envelope constant:", round(w["envelope_constant"], 2))
print("Girsanov cost:", girsanov_cost(traces))
