"""
What the projected process looks like in the long run.

Snapshots of S_n = X_n / ||X_n|| after a burn-in approximate the invariant
law.  Two runs from unrelated starting segments should produce the same
marginals; the fraction of snapshots with a large modulus of continuity
should drop as the window shrinks; and averaging psi over the snapshots
gives the growth rate once more.
"""
import numpy as np

from delaygrowth import make_eta
from delaygrowth.measure import (
    choose_thin, joint_energy_distance, ks_critical_value, lambda_from_measure,
    marginal_distance, marginal_ranges, sample_sphere_path, tightness_report,
)

N, T, SEED = 64, 4000, 11
a = sample_sphere_path(make_eta("const:1", N), T, burn_in=200, thin=1, seed=SEED, replica=0)
b = sample_sphere_path(make_eta("cos:2", N), T, burn_in=200, thin=1, seed=SEED, replica=1)

thin = max(choose_thin(s.marginal(0.0)) for s in (a, b))
a, b = a.thinned(thin), b.thinned(thin)
print(f"thinning every {thin} intervals -> {len(a)} snapshots per run")

for c in a.coords:
    d = marginal_distance(a, b, c)
    print(f"coord {c:+.1f}: KS {d:.4f}  (1% critical {ks_critical_value(len(a), len(b)):.4f})")
print("energy distance of (s(-1), s(0)):", round(joint_energy_distance(a, b), 5))

rep = tightness_report(a, (1.0, 0.5, 0.25, 0.125), (0.25, 0.5))
for d, row in zip(rep["deltas"], rep["table"]):
    print(f"delta={d:5.3f}  P(mod >= 0.25)={row[0]:.3f}  P(mod >= 0.5)={row[1]:.3f}")

print("growth rate from snapshots:", round(lambda_from_measure(a), 4),
      round(lambda_from_measure(b), 4))
print("observed marginal ranges:", {k: (round(lo, 3), round(hi, 3)) for k, (lo, hi) in marginal_ranges(a).items()})
