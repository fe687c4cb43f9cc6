"""End-to-end tests of the command-line interface via subprocesses."""

import subprocess
import sys

import numpy as np
import pytest

from shrinkglm.bench import CSV_HEADER, ErrorTable
from shrinkglm.datagen import load_dataset


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "shrinkglm", *map(str, args)],
        capture_output=True, text=True,
    )


def simulate(tmp_path, name="data.csv", **overrides):
    args = {
        "--model": "linear", "--n": 120, "--d": 5, "--beta": "five_ones",
        "--seed": 5, "--out": tmp_path / name,
    }
    args.update(overrides)
    flat = [str(item) for pair in args.items() if pair[1] is not None for item in pair]
    proc = run_cli("simulate", *flat)
    assert proc.returncode == 0, proc.stderr
    return args["--out"]


# --- global behavior ---


def test_help_exits_zero():
    proc = run_cli("--help")
    assert proc.returncode == 0
    for word in ("simulate", "fit", "cv", "bench", "lrsc"):
        assert word in proc.stdout


def test_missing_subcommand_is_usage_error():
    assert run_cli().returncode == 2


# --- simulate ---


def test_simulate_writes_loadable_dataset(tmp_path):
    out = tmp_path / "lin.csv"
    proc = run_cli("simulate", "--model", "linear", "--n", 50, "--d", 5,
                   "--beta", "five_ones", "--noise-sd", 0.5, "--seed", 1,
                   "--out", out)
    assert proc.returncode == 0
    assert "resolved configuration:" in proc.stdout
    assert f"wrote {out}" in proc.stdout
    data = load_dataset(out)
    assert (data.n, data.d) == (50, 5)
    assert data.y_clean is not None


def test_simulate_is_deterministic(tmp_path):
    a = simulate(tmp_path, "a.csv", **{"--seed": 9})
    b = simulate(tmp_path, "b.csv", **{"--seed": 9})
    c = simulate(tmp_path, "c.csv", **{"--seed": 10})
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_simulate_logistic_flips(tmp_path):
    out = tmp_path / "logi.csv"
    proc = run_cli("simulate", "--model", "logistic", "--n", 200, "--d", 4,
                   "--beta", "half_pm_half", "--flip-p", 0.1,
                   "--feature-dist", "t:2.1", "--seed", 3, "--out", out)
    assert proc.returncode == 0
    assert "rows flipped" in proc.stdout
    data = load_dataset(out)
    assert data.flip_mask is not None
    assert set(np.unique(data.z)) <= {0.0, 1.0}


def test_simulate_rejects_conflicting_flags(tmp_path):
    out = tmp_path / "x.csv"
    args = ["--n", 20, "--d", 4, "--beta", "half_pm_half", "--out", out]
    assert run_cli("simulate", "--model", "linear", "--flip-p", 0.1, *args).returncode == 2
    assert run_cli("simulate", "--model", "logistic", "--noise-sd", 1.0, *args).returncode == 2
    assert run_cli("simulate", "--model", "linear", "--beta", "spiky", "--n", 20,
                   "--d", 4, "--out", out).returncode == 2
    assert not out.exists()


# --- fit ---


def _parse_record(path):
    record = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        record[key] = value
    return record


def test_fit_writes_record_and_converges(tmp_path):
    data = simulate(tmp_path, **{"--noise-sd": 0.5})
    out = tmp_path / "fit.txt"
    proc = run_cli("fit", "--family", "linear", "--data", data,
                   "--shrink", "l4:auto", "--out", out)
    assert proc.returncode == 0
    assert "converged = true" in proc.stdout
    record = _parse_record(out)
    assert record["family"] == "linear"
    assert record["converged"] == "true"
    assert record["feature_mode"] == "norm_shrink_l4"
    assert record["lambda"] == "none"
    beta = np.array([float(v) for v in record["beta"].split(",")])
    assert beta.shape == (5,)
    assert float(record["beta_l2"]) == pytest.approx(np.linalg.norm(beta), rel=1e-12)


def test_fit_l1_and_weighted_records(tmp_path):
    lin = simulate(tmp_path, "lin.csv", **{"--noise-sd": 1.0})
    out = tmp_path / "l1.txt"
    proc = run_cli("fit", "--family", "linear", "--data", lin,
                   "--estimator", "l1:auto", "--out", out)
    assert proc.returncode == 0
    assert float(_parse_record(out)["lambda"]) > 0
    logi = simulate(tmp_path, "logi.csv", **{
        "--model": "logistic", "--beta": "half_pm_half", "--d": 4,
        "--flip-p": 0.1, "--noise-sd": None,
    })
    out2 = tmp_path / "w.txt"
    proc = run_cli("fit", "--family", "logistic", "--data", logi,
                   "--estimator", "weighted:0.1", "--out", out2)
    assert proc.returncode == 0
    assert float(_parse_record(out2)["weighted_p"]) == 0.1


def test_fit_nonconvergence_exit_code(tmp_path):
    data = simulate(tmp_path, **{"--noise-sd": 0.5})
    out = tmp_path / "fit.txt"
    proc = run_cli("fit", "--family", "linear", "--data", data,
                   "--tol", 1e-30, "--max-iters", 2, "--out", out)
    assert proc.returncode == 3
    assert _parse_record(out)["converged"] == "false"


def test_fit_error_exit_codes(tmp_path):
    data = simulate(tmp_path)
    out = tmp_path / "fit.txt"
    missing = run_cli("fit", "--family", "linear", "--data", tmp_path / "nope.csv",
                      "--out", out)
    assert missing.returncode == 1
    assert "error:" in missing.stderr
    assert run_cli("fit", "--family", "linear", "--data", data,
                   "--shrink", "l9:auto", "--out", out).returncode == 2
    assert run_cli("fit", "--family", "linear", "--data", data,
                   "--estimator", "weighted:0.1", "--out", out).returncode == 2


# --- cv ---


def test_cv_writes_grid_and_selection(tmp_path):
    data = simulate(tmp_path, **{"--noise-sd": 1.0, "--n": 100})
    out = tmp_path / "cv.txt"
    proc = run_cli("cv", "--family", "linear", "--data", data,
                   "--shrink", "l4", "--tau-grid", "auto,inf",
                   "--folds", 4, "--out", out)
    assert proc.returncode == 0
    assert "selected tau1 = " in proc.stdout
    lines = out.read_text().splitlines()
    assert lines[0].startswith("selected_tau1=")
    grid_start = lines.index("tau1,tau2,lambda,loss")
    assert len(lines) - grid_start - 1 == 2  # one row per grid point
    for row in lines[grid_start + 1:]:
        assert len(row.split(",")) == 4


def test_cv_l1_grid_size(tmp_path):
    data = simulate(tmp_path, **{"--noise-sd": 1.0, "--n": 100})
    out = tmp_path / "cv.txt"
    proc = run_cli("cv", "--family", "linear", "--data", data,
                   "--estimator", "l1", "--shrink", "none",
                   "--lambda-grid", "auto,0.5,1.0", "--out", out)
    assert proc.returncode == 0
    lines = out.read_text().splitlines()
    assert len(lines) - lines.index("tau1,tau2,lambda,loss") - 1 == 3


def test_cv_flag_pairing_errors(tmp_path):
    data = simulate(tmp_path, **{"--n": 60})
    out = tmp_path / "cv.txt"
    base = ["cv", "--family", "linear", "--data", data, "--out", out]
    # penalty grid without the l1 estimator, and vice versa
    assert run_cli(*base, "--shrink", "none", "--lambda-grid", "0.5").returncode == 2
    assert run_cli(*base, "--estimator", "l1", "--shrink", "none").returncode == 2
    assert run_cli(*base, "--estimator", "l1:0.5", "--shrink", "none",
                   "--lambda-grid", "0.5").returncode == 2
    assert run_cli(*base, "--shrink", "none", "--tau-grid", "1,2").returncode == 2
    assert run_cli(*base, "--shrink", "l4").returncode == 2  # missing tau grid


# --- bench ---


def test_bench_runs_shipped_config(tmp_path):
    out = tmp_path / "table.csv"
    proc = run_cli("bench", "--config", "fig3_lowdim_small", "--trials", 2,
                   "--out", out)
    assert proc.returncode == 0, proc.stderr
    assert "resolved configuration:" in proc.stdout
    assert f"wrote {out}" in proc.stdout
    table = ErrorTable.from_csv(out.read_text())
    # 2 methods x 2 dists x 2 sample sizes
    assert len(table.rows) == 8
    assert out.read_text().splitlines()[0] == CSV_HEADER
    assert all(row.trials == 2 for row in table.rows)


def test_bench_error_exit_codes(tmp_path):
    out = tmp_path / "table.csv"
    assert run_cli("bench", "--config", "no_such_config", "--out", out).returncode == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: {name: x}\n")
    assert run_cli("bench", "--config", bad, "--out", out).returncode == 2
    assert run_cli("bench", "--config", "fig3_lowdim_small", "--trials", 0,
                   "--out", out).returncode == 2


# --- lrsc ---


def test_lrsc_pattern_beta_and_kappa_floor(tmp_path):
    data = simulate(tmp_path, "logi.csv", **{
        "--model": "logistic", "--beta": "half_pm_half", "--d": 4,
        "--n": 300, "--noise-sd": None,
    })
    proc = run_cli("lrsc", "--family", "logistic", "--data", data,
                   "--beta-star", "half_pm_half", "--dirs", 100,
                   "--kappa-floor", 0.0)
    assert proc.returncode == 0
    assert "min_ratio = " in proc.stdout
    assert "PASS" in proc.stdout
    fail = run_cli("lrsc", "--family", "logistic", "--data", data,
                   "--beta-star", "half_pm_half", "--dirs", 100,
                   "--kappa-floor", 1e9)
    assert fail.returncode == 1
    assert "FAIL" in fail.stdout


def test_lrsc_beta_file_and_validation(tmp_path):
    data = simulate(tmp_path, **{"--n": 80})
    beta_file = tmp_path / "beta.txt"
    np.savetxt(beta_file, np.ones(5))
    proc = run_cli("lrsc", "--family", "linear", "--data", data,
                   "--beta-star", beta_file, "--dirs", 50)
    assert proc.returncode == 0
    short = tmp_path / "short.txt"
    np.savetxt(short, np.ones(3))
    assert run_cli("lrsc", "--family", "linear", "--data", data,
                   "--beta-star", short, "--dirs", 50).returncode == 1
    assert run_cli("lrsc", "--family", "linear", "--data", data,
                   "--beta-star", "five_ones", "--dirs", 0).returncode == 2
