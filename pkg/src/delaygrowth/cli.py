"""
Batch experiment runner.

::

    delaygrowth moments  [--eta const:1] [--N 64] [--ensemble 100000] [--check]
    delaygrowth lyapunov --eta SPEC [--eta SPEC ...] [--T 2000] [--replicas 8] [--check]
    delaygrowth couple   --eta SPEC [--phi SPEC | --eps 1e-6] [--lambda 64] [--check]
    delaygrowth sweep    --eta SPEC [--lambda 4,16,64,256] [--check]
    delaygrowth measure  --eta SPEC [--eta SPEC] [--T 4000] [--burn-in 200] [--check]

Settings are resolved as built-in defaults < ``--config`` JSON file <
explicit flags.  Every run writes its tables plus ``manifest.json`` into the
output directory (``--out``, else ``$DELAYGROWTH_OUT``, else ``results``).
Files are staged and published together at the end of the run.

Exit status: 0 success, 1 runtime failure, 2 usage error, 3 a ``--check``
threshold was violated.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import __version__
from . import coupling, lyapunov, measure, moments
from .initial import InitialConditionError, make_eta
from .output import SCHEMA_VERSION, OutputSet, rows_to_csv

COMMANDS = ("moments", "lyapunov", "couple", "sweep", "measure")
OUT_ENV = "DELAYGROWTH_OUT"

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    eta_spec: tuple = ()
    phi_spec: str | None = None
    eps: float = 1e-6
    N: int = 64
    T: int = 2000
    burn_in: int | None = None    # None: 200 for measure, 50 otherwise
    thin: int = measure.DEFAULT_THIN
    batches: int = 20
    lambda_grid: tuple | None = None   # None: 64 for couple, the default grid otherwise
    kappa: float = coupling.DEFAULT_KAPPA
    master_seed: int = 0
    replicas: int = 8
    ensemble: int = 100_000
    out_dir: str = "results"
    format: str = "csv"
    check: bool = False


_DEFAULT_ETA = {"moments": ("const:1",)}
_INT_FIELDS = ("N", "T", "burn_in", "thin", "batches", "replicas", "ensemble")
# config-file keys -> dataclass field names
_ALIASES = {"seed": "master_seed", "eta": "eta_spec", "phi": "phi_spec",
            "lambda": "lambda_grid", "out": "out_dir"}


def _parse_lambdas(text) -> tuple:
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--lambda expects a comma-separated list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaygrowth", description=__doc__.split("::")[0].strip(),
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    helps = {
        "moments": "second-moment oracle check of the integrator",
        "lyapunov": "growth-rate estimates from one or more initial segments",
        "couple": "one coupling run at a single lambda",
        "sweep": "coupling statistics across a lambda grid",
        "measure": "sphere-process snapshots, tightness and two-sample distances",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--eta", action="append", dest="eta_spec", metavar="SPEC",
                       help="initial segment: const:c | linear | cos:k | saw | file:PATH "
                            "(repeatable)")
        s.add_argument("--phi", dest="phi_spec", metavar="SPEC",
                       help="second initial segment for coupling (default: perturbed eta)")
        s.add_argument("--eps", type=float, help="relative perturbation of eta when --phi is absent")
        s.add_argument("--N", type=int, help="grid steps per unit interval")
        s.add_argument("--T", type=int, help="horizon in unit intervals")
        s.add_argument("--burn-in", dest="burn_in", type=int)
        s.add_argument("--thin", type=int)
        s.add_argument("--batches", type=int)
        s.add_argument("--lambda", dest="lambda_grid", metavar="L1,L2,...")
        s.add_argument("--kappa", type=float)
        s.add_argument("--seed", dest="master_seed", type=int)
        s.add_argument("--replicas", type=int)
        s.add_argument("--ensemble", type=int, help="Monte Carlo ensemble size (moments)")
        s.add_argument("--out", dest="out_dir", metavar="DIR")
        s.add_argument("--format", choices=("csv", "json"))
        s.add_argument("--config", metavar="FILE", help="JSON file of settings")
        s.add_argument("--check", action="store_true", default=None,
                       help="verify acceptance thresholds; exit 3 on violation")
    return p


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for key, val in data.items():
        key = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key not in known:
            raise UsageError(f"unknown key {key!r} in config file {path}")
        out[key] = val
    return out


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check a configuration and normalize its field types."""
    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}; choose from {', '.join(COMMANDS)}")
    for name in _INT_FIELDS:
        v = getattr(cfg, name)
        if v is None and name == "burn_in":
            continue
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v <= 0:
            raise UsageError(f"--{name.replace('_', '-')} must be a positive integer, got {v!r}")
    if cfg.N < 2:
        raise UsageError("--N must be at least 2")
    if cfg.master_seed < 0:
        raise UsageError("--seed must be nonnegative")
    if not 0 < cfg.kappa <= 1:
        raise UsageError("--kappa must lie in (0, 1]")
    if cfg.lambda_grid is None:
        lams = ((coupling.DEFAULT_LAMBDA,) if cfg.command == "couple"
                else coupling.DEFAULT_LAMBDA_GRID)
    else:
        lams = _parse_lambdas(cfg.lambda_grid)
    if not lams:
        raise UsageError("--lambda grid is empty")
    if any(l < 0 for l in lams):
        raise UsageError("--lambda values must be nonnegative")
    if cfg.command == "couple" and len(lams) != 1:
        raise UsageError("couple takes a single --lambda value; use sweep for a grid")
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"--format must be csv or json, got {cfg.format!r}")
    etas = cfg.eta_spec
    if isinstance(etas, str):
        etas = (etas,)
    etas = tuple(etas) or _DEFAULT_ETA.get(cfg.command, ())
    if not etas:
        raise UsageError(f"{cfg.command} requires --eta")
    if cfg.command == "lyapunov" and cfg.T < 100:
        raise UsageError("--T must be at least 100 for growth-rate estimates")
    for spec in etas + ((cfg.phi_spec,) if cfg.phi_spec else ()):
        try:
            make_eta(spec, cfg.N)
        except InitialConditionError as exc:
            raise UsageError(f"invalid initial condition: {exc}") from None
    burn_in = cfg.burn_in
    if burn_in is None:
        burn_in = measure.DEFAULT_BURN_IN if cfg.command == "measure" else lyapunov.DEFAULT_BURN_IN
    if cfg.command == "measure" and cfg.T <= burn_in:
        raise UsageError("--T must exceed --burn-in")
    return replace(cfg, eta_spec=etas, lambda_grid=lams, burn_in=burn_in, check=bool(cfg.check))


def parse_config(argv=None, env=None) -> ExperimentConfig:
    """Resolve command-line flags, a JSON config file and defaults into a config.

    Raises
    ------
    UsageError
        For invalid values.  Malformed flags make argparse exit with status 2.
    """
    env = os.environ if env is None else env
    ns = vars(build_parser().parse_args(argv))
    settings = {"out_dir": env.get(OUT_ENV, "results")}
    cfg_file = ns.pop("config", None)
    if cfg_file:
        file_settings = _load_config_file(cfg_file)
        file_settings.pop("command", None)
        settings.update(file_settings)
    settings.update({k: v for k, v in ns.items() if v is not None})
    return validate(ExperimentConfig(**settings))


# -- experiment runners ----------------------------------------------------------
# Each returns (tables, extra_files, summary, checks).  ``tables`` maps a base
# name to (rows, columns); ``checks`` maps a criterion name to a bool.


def _etas(cfg):
    return [make_eta(s, cfg.N) for s in cfg.eta_spec]


def _run_moments(cfg):
    eta = _etas(cfg)[0]
    n_int = 2
    t0 = time.perf_counter()
    est = moments.mc_second_moments(eta, n_int, cfg.ensemble, cfg.master_seed)
    const = bool(np.all(eta.values == eta.values[0]))
    ref = (moments.refinement_study(float(eta.values[0]), cfg.N, n_int, cfg.ensemble,
                                    cfg.master_seed + 1) if const else None)
    elapsed = time.perf_counter() - t0
    cols = ("t", "resolution_N", "replicas", "estimate", "standard_error", "ito_value",
            "scheme_value", "z_score")
    rows = []
    for e in est:
        row = asdict(e)
        row["z_score"] = ((e.estimate - e.ito_value) / e.standard_error
                          if e.ito_value is not None else None)
        rows.append(row)
    summary = {"moments": rows, "refinement": ref}
    checks = {}
    if const:
        for row in rows:
            checks[f"E X({row['t']})^2 within 3 SE of oracle"] = abs(row["z_score"]) <= 3
        checks["halving h reduces |scheme bias|"] = (
            abs(ref["fine_scheme_bias"]) < abs(ref["coarse_scheme_bias"]))
        predicted = ref["fine_scheme_bias"] - ref["coarse_scheme_bias"]
        checks["paired MC refinement matches predicted bias shift (3 SE)"] = (
            abs(ref["diff_mean"] - predicted) <= 3 * ref["diff_se"])
        checks["runtime under 60 s"] = elapsed < 60
    tables = {"moments": (rows, cols)}
    return tables, {}, summary, checks


def _run_lyapunov(cfg):
    etas = _etas(cfg)
    R = cfg.replicas
    reports, pooled = [], {}
    t0 = time.perf_counter()
    for i, (eta, spec) in enumerate(zip(etas, cfg.eta_spec)):
        reps = lyapunov.run_all(eta, cfg.T, cfg.master_seed, range(i * R, (i + 1) * R),
                                burn_in=cfg.burn_in, batches=cfg.batches, label=spec)
        reports.extend(reps)
        for m in lyapunov.METHODS:
            pooled[spec, m] = lyapunov.pool(r for r in reps if r.method == m)
    elapsed = time.perf_counter() - t0
    pooled_rows = [asdict(p) for p in pooled.values()]
    method_rows, eta_rows = [], []
    for spec in cfg.eta_spec:
        for other in ("furstenberg", "direct_sup"):
            method_rows.append(lyapunov.compare(pooled[spec, "direct_m2"], pooled[spec, other]))
    for i, a in enumerate(cfg.eta_spec):
        for b in cfg.eta_spec[i + 1:]:
            eta_rows.append(lyapunov.compare(pooled[a, "direct_m2"], pooled[b, "direct_m2"]))
    cmp_cols = ("a", "b", "method_a", "method_b", "difference", "combined_se", "within")
    checks = {
        "direct_m2 agrees with furstenberg and direct_sup (3 SE)": all(r["within"] for r in method_rows),
        "estimates consistent with the 1/2 upper bound (3 SE)": not any(
            r.exceeds_upper_bound() for r in list(pooled.values()) + reports),
        "runtime under 120 s per initial segment": elapsed < 120 * len(etas),
    }
    if eta_rows:
        checks["initial-condition independence (3 SE)"] = all(r["within"] for r in eta_rows)
    tables = {
        "estimates": ([asdict(r) for r in reports], lyapunov.REPORT_COLUMNS),
        "pooled": (pooled_rows, lyapunov.REPORT_COLUMNS),
        "comparisons": (method_rows + eta_rows, cmp_cols),
    }
    return tables, {}, {"pooled": pooled_rows, "comparisons": method_rows + eta_rows}, checks


def _coupling_pair(cfg):
    eta = _etas(cfg)[0]
    phi = make_eta(cfg.phi_spec, cfg.N) if cfg.phi_spec else coupling.perturbed(eta, cfg.eps)
    return eta, phi


def _run_couple(cfg):
    eta, phi = _coupling_pair(cfg)
    lam = cfg.lambda_grid[0]
    traces = coupling.run_replicas(eta, phi, lam, kappa=cfg.kappa, T=cfg.T,
                                   seed=cfg.master_seed, replicas=range(cfg.replicas))
    stats = coupling.contraction_stats(traces)
    wait = coupling.waiting_time_stats(traces)
    cost = coupling.girsanov_cost(traces)
    wait_summary = {k: v for k, v in wait.items() if k not in ("gaps", "k", "survival")}
    wait_summary["gap_count"] = int(len(wait["gaps"]))
    summary = {"contraction": stats, "waiting_time": wait_summary, "girsanov": cost}
    tables = {}
    for tr in traces:
        tables[f"trace_r{tr.config.replica}"] = (tr.to_rows(), coupling.TRACE_COLUMNS)
    tables["survival"] = ([{"k": int(k), "survival": float(s)} for k, s in
                           zip(wait["k"], wait["survival"])], ("k", "survival"))
    checks = {
        "conditional ratio on A_n within 1.25 x bound": stats["conditional_ratio_on_A"]
        <= 1.25 * stats["bound_on_A"],
        "conditional ratio off A_n within 1.25 x bound": stats["conditional_ratio_off_A"]
        <= 1.25 * stats["bound_off_A"],
        "Girsanov tail share <= 1%": cost["total"] > 0 and cost["tail_share"] <= 0.01,
        "clamp events < 0.1% of rho=1 steps": cost["clamp_share"] < 1e-3,
    }
    return tables, {}, summary, checks


def _run_sweep(cfg):
    eta, phi = _coupling_pair(cfg)
    rows = coupling.lambda_sweep(eta, phi, cfg.lambda_grid, kappa=cfg.kappa, T=cfg.T,
                                 seed=cfg.master_seed, replicas=range(cfg.replicas))
    cols = tuple(rows[0].keys())
    slopes = [r["slope"] for r in rows]
    lams = [r["lambda"] for r in rows]
    summary = {"lambdas": lams, "slopes": slopes,
               "slope_monotone_decreasing": coupling.monotone_decreasing(slopes)}
    checks = {
        "slope strictly decreasing along the lambda grid": summary["slope_monotone_decreasing"],
        "slope negative for lambda >= 64": all(s < 0 for l, s in zip(lams, slopes) if l >= 64),
        "conditional ratios within 1.25 x bounds": all(
            r["conditional_ratio_on_A"] <= 1.25 * r["bound_on_A"]
            and r["conditional_ratio_off_A"] <= 1.25 * r["bound_off_A"] for r in rows),
        "waiting-time tails below a geometric envelope": all(
            r["wait_envelope_constant"] <= 10 for r in rows),
    }
    ci = {r["lambda"]: (r["wait_rate_lo"], r["wait_rate_hi"]) for r in rows}
    if 16.0 in ci and 256.0 in ci:
        summary["wait_rate_ci_overlap_16_256"] = coupling.ci_overlap([ci[16.0], ci[256.0]])
        checks["waiting-time rate CIs overlap (lambda 16 vs 256)"] = summary[
            "wait_rate_ci_overlap_16_256"]
    return {"sweep": (rows, cols)}, {}, summary, checks


def _run_measure(cfg):
    etas = _etas(cfg)
    sets = [measure.sample_sphere_path(eta, cfg.T, burn_in=cfg.burn_in, thin=cfg.thin,
                                       seed=cfg.master_seed, replica=i, label=spec)
            for i, (eta, spec) in enumerate(zip(etas, cfg.eta_spec))]
    deltas = (1.0, 0.5, 0.25, 0.125)
    tight_rows, marg_rows, checks = [], [], {}
    for i, s in enumerate(sets):
        if len(s) < 100:
            raise RuntimeError(f"only {len(s)} snapshots after thinning; increase --T")
        probs = measure.tightness_report(s, deltas)["table"][:, 0]
        for d, p in zip(deltas, probs):
            tight_rows.append({"set": i, "eta": cfg.eta_spec[i], "delta": d,
                               "epsilon": 0.5, "probability": float(p)})
        checks[f"tightness probabilities strictly decrease with delta ({cfg.eta_spec[i]})"] = bool(
            np.all(np.diff(probs) < 0))
        for c in s.coords:
            m = s.marginal(c)
            marg_rows.append({"set": i, "eta": cfg.eta_spec[i], "coord": c, "n": len(m),
                              "ess": measure.effective_sample_size(m),
                              "mean": float(m.mean()), "std": float(m.std(ddof=1)),
                              "min": float(m.min()), "max": float(m.max())})
    summary = {"thin": cfg.thin, "snapshots": [len(s) for s in sets],
               "suggested_thin": [max(measure.choose_thin(s.marginal(c)) for c in s.coords)
                                  for s in sets],
               "lambda_from_measure": [measure.lambda_from_measure(s) for s in sets],
               "g_second_moment": [measure.g_second_moment(s) for s in sets]}
    tables = {"tightness": (tight_rows, ("set", "eta", "delta", "epsilon", "probability")),
              "marginals": (marg_rows, ("set", "eta", "coord", "n", "ess", "mean", "std",
                                        "min", "max"))}
    if len(sets) >= 2:
        ks_rows = []
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                a, b = sets[i], sets[j]
                # critical value at the effective sample sizes of the coord-0 marginals
                na = min(len(a), measure.effective_sample_size(a.marginal(0.0)))
                nb = min(len(b), measure.effective_sample_size(b.marginal(0.0)))
                d = measure.marginal_distance(a, b, 0.0)
                crit = measure.ks_critical_value(na, nb, 0.01)
                ks_rows.append({"a": cfg.eta_spec[i], "b": cfg.eta_spec[j], "coord": 0.0,
                                "ks": d, "n_eff_a": na, "n_eff_b": nb, "critical_1pct": crit,
                                "below": bool(d < crit),
                                "energy_distance": measure.joint_energy_distance(a, b)})
        tables["distances"] = (ks_rows, ("a", "b", "coord", "ks", "n_eff_a", "n_eff_b",
                                         "critical_1pct", "below", "energy_distance"))
        summary["distances"] = ks_rows
        checks["KS distance at coord 0 below the 1% critical value"] = all(
            r["below"] for r in ks_rows)
    extra = {f"samples_{i}": s for i, s in enumerate(sets)}
    return tables, extra, summary, checks


_RUNNERS = {"moments": _run_moments, "lyapunov": _run_lyapunov, "couple": _run_couple,
            "sweep": _run_sweep, "measure": _run_measure}


def _seed_table(cfg) -> list[dict]:
    """Stream identities used by the run: Philox key = SeedSequence(seed, spawn_key=(r,))."""
    if cfg.command == "moments":
        streams = [cfg.master_seed, cfg.master_seed + 1]
        return [{"role": role, "seed": s, "replica": 0}
                for role, s in zip(("ensemble", "refinement"), streams)]
    if cfg.command == "lyapunov":
        R = cfg.replicas
        return [{"eta": spec, "seed": cfg.master_seed, "replica": i * R + r}
                for i, spec in enumerate(cfg.eta_spec) for r in range(R)]
    if cfg.command == "measure":
        return [{"eta": spec, "seed": cfg.master_seed, "replica": i}
                for i, spec in enumerate(cfg.eta_spec)]
    return [{"seed": cfg.master_seed, "replica": r} for r in range(cfg.replicas)]


def _config_dict(cfg) -> dict:
    d = asdict(cfg)
    d["eta_spec"] = list(cfg.eta_spec)
    d["lambda_grid"] = list(cfg.lambda_grid)
    d.pop("out_dir")  # location is not part of the experiment
    return d


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Execute ``cfg``, publish its outputs and return the exit status."""
    stream = sys.stdout if stream is None else stream
    out = OutputSet(cfg.out_dir)
    try:
        tables, extra, summary, checks = _RUNNERS[cfg.command](cfg)
        ext = cfg.format
        for name, (rows, cols) in tables.items():
            if ext == "csv":
                out.text(f"{name}.csv", rows_to_csv(rows, cols))
            else:
                out.json(f"{name}.json", {"schema_version": SCHEMA_VERSION, "columns": list(cols),
                                          "rows": [{c: r.get(c) for c in cols} for r in rows]})
        for name, sset in extra.items():
            out.npy(f"{name}.npy", sset.samples)
            out.json(f"{name}.json", {"schema_version": SCHEMA_VERSION,
                                      "coords": list(sset.coords),
                                      "shape": list(sset.samples.shape),
                                      "provenance": sset.provenance})
        out.json("summary.json", {"schema_version": SCHEMA_VERSION, "command": cfg.command,
                                  **summary, "checks": checks})
        files = sorted(out.names) + ["manifest.json"]
        out.json("manifest.json", {"schema_version": SCHEMA_VERSION, "version": __version__,
                                   "config": _config_dict(cfg), "streams": _seed_table(cfg),
                                   "files": files})
        out.commit()
    except BaseException:
        out.discard()
        raise
    for name, ok in checks.items():
        if cfg.check:
            print(f"{'PASS' if ok else 'FAIL'}  {name}", file=stream)
    if cfg.check and not all(checks.values()):
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"delaygrowth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return run(cfg)
    except KeyboardInterrupt:
        print("delaygrowth: interrupted; no outputs written", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"delaygrowth: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
