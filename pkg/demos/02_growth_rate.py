"""
Estimating the almost-sure growth rate three ways.

The trajectory is renormalized once per unit interval, so we can run for
thousands of intervals.  From the same path we read

* the increments of log ||X_n|| in the M2 norm,
* the same in the sup norm,
* the time average of psi = f/2 - g^2/4 over the projected process,

and attach batch-means error bars.  The three should agree, and no initial
segment should change the answer.
"""
from delaygrowth import make_eta
from delaygrowth.lyapunov import compare, multi_eta_harness, pool, run_all

N, T, SEED = 64, 2000, 7
eta = make_eta("const:1", N)

reports = run_all(eta, T, SEED, replicas=range(8), label="const:1")
pooled = {m: pool(r for r in reports if r.method == m)
          for m in ("direct_m2", "direct_sup", "furstenberg")}
for m, p in pooled.items():
    print(f"{m:12s} {p.estimate:+.4f} +- {p.standard_error:.4f}")
print("m2 vs psi-average:", compare(pooled["direct_m2"], pooled["furstenberg"]))

# different starting shapes, independent noise for each
specs = ["const:1", "linear", "cos:2", "saw", "const:-1"]
_, table = multi_eta_harness([make_eta(s, N) for s in specs], T, 8, SEED, labels=specs)
for row in table:
    print(f"{row['a']:>9s} vs {row['b']:<9s} |diff| = {row['difference']:.4f}"
          f"  (3 SE = {3 * row['combined_se']:.4f})")
