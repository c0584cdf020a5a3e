import json
import subprocess
import sys

import numpy as np
import pytest

from delaygrowth.cli import ExperimentConfig, main, parse_config, run
from delaygrowth.output import OutputSet
from delaygrowth.segment import m2_norm


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def test_defaults_filled():
    cfg = parse_config(["lyapunov", "--eta", "const:1", "--T", "2000", "--seed", "7"], env={})
    assert cfg.command == "lyapunov" and cfg.master_seed == 7 and cfg.T == 2000
    assert (cfg.N, cfg.burn_in, cfg.batches, cfg.kappa, cfg.replicas) == (64, 50, 20, 0.05, 8)
    assert cfg.eta_spec == ("const:1",)
    assert cfg.out_dir == "results"


def test_measure_defaults():
    cfg = parse_config(["measure", "--eta", "saw"], env={})
    assert cfg.burn_in == 200 and cfg.thin == 5


def test_couple_default_lambda():
    assert parse_config(["couple", "--eta", "const:1"], env={}).lambda_grid == (64.0,)
    assert parse_config(["sweep", "--eta", "const:1"], env={}).lambda_grid == (4.0, 16.0, 64.0, 256.0)
    assert parse_config(["sweep", "--eta", "const:1", "--lambda", "2,8"], env={}).lambda_grid == (2.0, 8.0)


def test_env_out_dir():
    assert parse_config(["moments"], env={"DELAYGROWTH_OUT": "/tmp/x"}).out_dir == "/tmp/x"
    assert parse_config(["moments", "--out", "y"], env={"DELAYGROWTH_OUT": "/tmp/x"}).out_dir == "y"


def test_config_file_precedence(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"N": 128, "T": 300, "seed": 3, "eta": ["linear"]}))
    cfg = parse_config(["lyapunov", "--config", str(cfg_path), "--T", "400"], env={})
    assert cfg.N == 128 and cfg.T == 400 and cfg.master_seed == 3
    assert cfg.eta_spec == ("linear",)


@pytest.mark.parametrize("argv,needle", [
    (["lyapunov"], "requires --eta"),
    (["lyapunov", "--eta", "const:0"], "identically zero"),
    (["lyapunov", "--eta", "wobble"], "unknown initial condition"),
    (["lyapunov", "--eta", "const:1", "--N", "0"], "--N must be a positive integer"),
    (["lyapunov", "--eta", "const:1", "--T", "-5"], "--T must be a positive integer"),
    (["sweep", "--eta", "const:1", "--lambda", ""], "grid is empty"),
    (["couple", "--eta", "const:1", "--lambda", "4,16"], "single --lambda"),
    (["measure", "--eta", "const:1", "--T", "100"], "must exceed --burn-in"),
])
def test_usage_errors(argv, needle, capsys):
    assert main(argv) == 2
    assert needle in capsys.readouterr().err


def test_unknown_command(capsys):
    assert main(["frobnicate"]) == 2
    assert "invalid choice" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"bogus": 1}))
    assert main(["moments", "--config", str(p)]) == 2
    p.write_text("{not json")
    assert main(["moments", "--config", str(p)]) == 2
    assert main(["moments", "--config", str(tmp_path / "missing.json")]) == 2


def test_moments_check(tmp_path, capsys):
    assert main(["moments", "--check", "--seed", "5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
    rows = (tmp_path / "moments.csv").read_text().splitlines()
    assert rows[0].startswith("t,resolution_N,replicas,estimate")
    assert len(rows) == 3


def test_config_n_reaches_manifest(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"N": 128}))
    out = tmp_path / "o"
    assert main(["moments", "--config", str(cfg_path), "--ensemble", "2000",
                 "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["N"] == 128
    assert "moments.csv" in man["files"] and man["version"]


def test_byte_identical_outputs(tmp_path):
    argv = ["lyapunov", "--eta", "const:1", "--eta", "saw", "--T", "200", "--replicas", "2",
            "--seed", "9"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    fa, fb = files(tmp_path / "a"), files(tmp_path / "b")
    assert set(fa) == {"estimates.csv", "pooled.csv", "comparisons.csv", "summary.json",
                       "manifest.json"}
    assert fa == fb


def test_manifest_streams(tmp_path):
    assert main(["lyapunov", "--eta", "const:1", "--eta", "linear", "--T", "100",
                 "--batches", "10", "--replicas", "3", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert [s["replica"] for s in man["streams"]] == list(range(6))
    assert man["schema_version"] == 1


def test_sweep_rows_and_flag(tmp_path):
    assert main(["sweep", "--eta", "const:1", "--lambda", "4,16,64,256", "--T", "500",
                 "--replicas", "4", "--seed", "2026", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 5
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["slope_monotone_decreasing"] is True


def test_check_violation_exit_3(tmp_path, capsys):
    # a grid listed in decreasing order cannot have decreasing slopes
    code = main(["sweep", "--eta", "const:1", "--lambda", "256,4", "--T", "300",
                 "--replicas", "2", "--check", "--out", str(tmp_path)])
    assert code == 3
    assert "FAIL" in capsys.readouterr().out
    assert (tmp_path / "summary.json").exists()


def test_json_format(tmp_path):
    assert main(["couple", "--eta", "const:1", "--T", "150", "--replicas", "1",
                 "--format", "json", "--out", str(tmp_path)]) == 0
    tr = json.loads((tmp_path / "trace_r0.json").read_text())
    assert tr["schema_version"] == 1 and len(tr["rows"]) == 150
    assert tr["columns"][0] == "n"


def test_measure_outputs(tmp_path):
    assert main(["measure", "--eta", "const:1", "--eta", "cos:2", "--T", "800",
                 "--burn-in", "50", "--thin", "2", "--out", str(tmp_path)]) == 0
    s = np.load(tmp_path / "samples_0.npy")
    assert s.shape == (376, 65)
    assert np.max(np.abs(m2_norm(s) - 1.0)) <= 1e-9
    side = json.loads((tmp_path / "samples_0.json").read_text())
    assert side["provenance"]["eta"] == "const:1"


def test_runtime_failure_exit_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["moments", "--ensemble", "100", "--out", str(blocker)]) == 1
    assert "delaygrowth:" in capsys.readouterr().err


def test_interrupted_run_leaves_nothing(tmp_path, monkeypatch):
    real = OutputSet.json

    def boom(self, name, obj):
        if name == "manifest.json":
            raise KeyboardInterrupt
        return real(self, name, obj)

    monkeypatch.setattr(OutputSet, "json", boom)
    assert main(["moments", "--ensemble", "100", "--out", str(tmp_path)]) == 1
    assert list(tmp_path.iterdir()) == []


def test_no_writes_outside_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["moments", "--ensemble", "100", "--out", "res"]) == 0
    assert [p.name for p in tmp_path.iterdir()] == ["res"]


def test_output_names_are_plain(tmp_path):
    out = OutputSet(tmp_path)
    with pytest.raises(ValueError):
        out.text("../escape.txt", "x")
    out.discard()


def test_run_with_config_object(tmp_path):
    cfg = ExperimentConfig("moments", eta_spec=("const:2",), N=8, ensemble=500,
                           out_dir=str(tmp_path), burn_in=50, lambda_grid=(64.0,))
    assert run(cfg) == 0
    rows = (tmp_path / "moments.csv").read_text().splitlines()
    assert rows[1].split(",")[5] == "8.0"   # oracle 4 * 2 at t = 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "delaygrowth", "moments", "--ensemble", "200",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "delaygrowth", "lyapunov"],
                       capture_output=True, text=True)
    assert r.returncode == 2
