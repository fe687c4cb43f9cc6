"""Tests for the benchmark harness: configs, CV, trials, tables, curvature."""

import math

import numpy as np
import pytest
import yaml

from shrinkglm.bench import (
    CSV_HEADER,
    ConfigError,
    ErrorRow,
    ErrorTable,
    ExperimentConfig,
    Method,
    SelectionSpec,
    cross_validate,
    l2_error,
    load_config,
    lrsc_probe,
    run_experiment,
    run_trial,
    sphere_directions,
)
from shrinkglm.datagen import (
    CorruptionSpec,
    FeatureDist,
    flip_labels,
    gen_features,
    gen_linear,
    gen_logistic,
    substream,
)
from shrinkglm.glm import Dataset, get_family
from shrinkglm.optimize import SolverOpts
from shrinkglm.shrink import default_tau

LINEAR = get_family("linear")
LOGISTIC = get_family("logistic")


# --- scoring ---


def test_l2_error_values():
    assert l2_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert l2_error([3.0, 0.0], [0.0, 4.0]) == 5.0


def test_l2_error_rejects_bad_inputs():
    with pytest.raises(ValueError):
        l2_error([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        l2_error([np.inf, 0.0], [0.0, 0.0])


# --- method and selection validation ---


def test_method_accepts_axis_settings():
    m = Method("a", "mle")
    assert m.tau1 is None and m.tau2 is None and m.lam is None
    m = Method("b", "l1", feature_mode="norm_shrink_l4", tau1="cv", lam="auto")
    assert m.tau1 == "cv" and m.lam == "auto"
    m = Method("c", "mle", feature_mode="norm_shrink_l2", tau1=math.inf)
    assert m.tau1 == math.inf
    assert Method("d", "mle", response_mode="clip", tau2="2.5").tau2 == 2.5


def test_method_rejects_bad_settings():
    with pytest.raises(ValueError):
        Method("", "mle")
    with pytest.raises(ValueError):
        Method("a,b", "mle")
    with pytest.raises(ValueError):
        Method("a", "ridge")
    with pytest.raises(ValueError):
        Method("a", "mle", tau1=1.0)  # feature_mode is none
    with pytest.raises(ValueError):
        Method("a", "mle", lam=0.1)  # not penalized
    with pytest.raises(ValueError):
        Method("a", "l1", lam=math.inf)
    with pytest.raises(ValueError):
        Method("a", "l1", feature_mode="norm_shrink_l4", tau1="tiny")


def test_selection_spec_validation():
    sel = SelectionSpec()
    assert sel.folds == 5 and sel.scope == "cell"
    assert math.inf in sel.tau_multipliers
    with pytest.raises(ValueError):
        SelectionSpec(folds=1)
    with pytest.raises(ValueError):
        SelectionSpec(scope="global")
    with pytest.raises(ValueError):
        SelectionSpec(tau_multipliers=())
    with pytest.raises(ValueError):
        SelectionSpec(lambda_multipliers=(1.0, -2.0))
    with pytest.raises(ValueError):
        SelectionSpec(lambda_multipliers=(1.0, math.inf))


# --- config parsing ---


def _raw_config():
    return {
        "experiment": {
            "name": "tiny",
            "model": "linear_highdim",
            "n_grid": [40, 80],
            "d": 6,
            "beta_pattern": "five_ones",
            "feature_dists": ["gaussian", "t:4.1"],
            "trials": 2,
            "base_seed": 5,
        },
        "corruption": {"kind": "additive_noise", "noise_dist": "gaussian", "target_sd": 1.0},
        "selection": {"folds": 3, "scope": "cell", "tau_multipliers": [1.0, math.inf],
                      "lambda_multipliers": [0.5, 1.0]},
        "solver": {"max_iters": 400, "grad_tol": 1e-7},
        "methods": [
            {"name": "mle_raw", "estimator": "mle"},
            {"name": "l1_shrunk", "estimator": "l1", "feature_mode": "norm_shrink_l4",
             "tau1": "cv", "lambda": "auto"},
        ],
    }


def test_config_from_dict_and_roundtrip():
    cfg = ExperimentConfig.from_dict(_raw_config())
    assert cfg.family_kind == "linear"
    assert cfg.n_grid == (40, 80)
    assert [d.label() for d in cfg.feature_dists] == ["gaussian", "t:4.1"]
    assert cfg.solver.max_iters == 400
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_logistic_config_roundtrip():
    raw = _raw_config()
    raw["experiment"]["model"] = "logistic_lowdim"
    raw["experiment"]["beta_pattern"] = "half_pm_half"
    raw["corruption"] = {"kind": "label_flip", "flip_p": 0.1}
    raw["methods"] = [
        {"name": "wmle", "estimator": "weighted_mle"},
        {"name": "wl1", "estimator": "weighted_l1", "feature_mode": "elementwise_clip",
         "tau1": "auto", "response_mode": "clip", "tau2": 2.0, "lambda": "cv",
         "preserve_sign": False},
    ]
    cfg = ExperimentConfig.from_dict(raw)
    assert cfg.corruption.flip_p == 0.1
    assert cfg.methods[1].preserve_sign is False
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "mutate, key_path",
    [
        (lambda r: r["experiment"].pop("name"), "experiment.name"),
        (lambda r: r.update(plots=True), "plots"),
        (lambda r: r["experiment"].update(color="red"), "experiment.color"),
        (lambda r: r["experiment"].update(trials="many"), "experiment.trials"),
        (lambda r: r["experiment"].update(trials=True), "experiment.trials"),
        (lambda r: r["experiment"].update(n_grid=[80, 40]), "experiment"),
        (lambda r: r["methods"][0].update(estimator="ridge"), "methods[0]"),
        (lambda r: r["methods"][0].update(tau1=[1.0]), "methods[0].tau1"),
        (lambda r: r.update(methods=[]), "methods"),
        (lambda r: r["corruption"].update(kind="poison"), "corruption.kind"),
        (lambda r: r["selection"].update(folds=1), "selection"),
        (lambda r: r["solver"].update(max_iters=1.5), "solver.max_iters"),
    ],
)
def test_config_errors_carry_key_paths(mutate, key_path):
    raw = _raw_config()
    mutate(raw)
    with pytest.raises(ConfigError) as excinfo:
        ExperimentConfig.from_dict(raw)
    assert excinfo.value.key_path == key_path


def test_config_rejects_model_corruption_mismatch():
    raw = _raw_config()
    raw["corruption"] = {"kind": "label_flip", "flip_p": 0.1}
    with pytest.raises(ConfigError, match="logistic"):
        ExperimentConfig.from_dict(raw)
    raw = _raw_config()
    raw["methods"][0]["estimator"] = "weighted_mle"
    with pytest.raises(ConfigError, match="weighted"):
        ExperimentConfig.from_dict(raw)


def test_config_rejects_duplicate_method_names():
    raw = _raw_config()
    raw["methods"][1]["name"] = "mle_raw"
    with pytest.raises(ConfigError, match="unique"):
        ExperimentConfig.from_dict(raw)


def test_load_config_matches_from_dict(tmp_path):
    raw = _raw_config()
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert load_config(path) == ExperimentConfig.from_dict(raw)


def test_load_config_parses_literal_inf(tmp_path):
    raw = _raw_config()
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(raw).replace(".inf", "SHOULD_NOT_APPEAR"))
    # write the multiplier grid with an explicit .inf token
    text = yaml.safe_dump(raw)
    assert ".inf" in text
    path.write_text(text)
    cfg = load_config(path)
    assert math.inf in cfg.selection.tau_multipliers


def test_load_config_rejects_bad_files(tmp_path):
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    with pytest.raises(ConfigError):
        load_config(empty)
    broken = tmp_path / "broken.yaml"
    broken.write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(broken)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.yaml")


# --- cross-validation ---


def _linear_cv_data(rep):
    rng = substream(11, "cv_lin", rep)
    X = gen_features(200, 5, FeatureDist(), rng)
    noise = CorruptionSpec("additive_noise", noise_dist=FeatureDist(), target_sd=1.0)
    return gen_linear(X, np.ones(5), noise, rng)


def test_cross_validate_single_point():
    data = _linear_cv_data(0)
    res = cross_validate(data, LINEAR, "mle", (math.inf,), (math.inf,), (1.0,),
                         folds=4, seed=0)
    assert (res.tau1, res.tau2, res.lam) == (math.inf, math.inf, 1.0)
    assert len(res.points) == 1
    assert np.isfinite(res.points[0].loss)


def test_cross_validate_is_deterministic():
    data = _linear_cv_data(1)
    grids = ((2.0, math.inf), (math.inf,), (1.0,))
    a = cross_validate(data, LINEAR, "mle", *grids, folds=5, seed=3)
    b = cross_validate(data, LINEAR, "mle", *grids, folds=5, seed=3)
    assert a == b


def test_cross_validate_tie_prefers_larger_tau():
    # both taus exceed every row norm, so the candidates fit identical data
    data = _linear_cv_data(2)
    res = cross_validate(data, LINEAR, "mle", (1e6, math.inf), (math.inf,), (1.0,),
                         folds=5, seed=1)
    assert res.points[0].loss == res.points[1].loss
    assert res.tau1 == math.inf


def test_cross_validate_rejects_bad_inputs():
    data = _linear_cv_data(3)
    with pytest.raises(ValueError):
        cross_validate(data, LINEAR, "huber", (1.0,), (1.0,), (1.0,))
    with pytest.raises(ValueError):
        cross_validate(data, LINEAR, "mle", (1.0,), (1.0,), (1.0,), folds=1)
    with pytest.raises(ValueError):
        cross_validate(data, LINEAR, "mle", (), (1.0,), (1.0,))
    with pytest.raises(ValueError):
        cross_validate(data, LINEAR, "mle", (1.0,), (1.0,), (1.0,), folds=data.n + 1)
    with pytest.raises(ValueError):
        cross_validate(data, LOGISTIC, "weighted_mle", (1.0,), (1.0,), (1.0,))


def test_cv_keeps_full_threshold_on_clean_gaussian_data():
    # with light tails and no corruption, a tiny threshold only destroys signal
    sched = default_tau(200, "log_n")
    wins = 0
    for rep in range(50):
        res = cross_validate(
            _linear_cv_data(rep), LINEAR, "mle",
            (0.01 * sched, math.inf), (math.inf,), (1.0,),
            folds=5, seed=substream(11, "cv_lin_folds", rep),
        )
        wins += bool(np.isinf(res.tau1))
    assert wins >= 45


def test_cv_picks_finite_threshold_under_heavy_tails():
    # flipped heavy-tailed logistic data: shrinking should win most of the time
    sched = default_tau(200, "log_n")
    beta = np.concatenate([np.full(5, 0.5), np.full(5, -0.5)])
    opts = SolverOpts(grad_tol=1e-7, max_iters=500)
    finite = 0
    for rep in range(50):
        rng = substream(13, "cv_logi", rep)
        X = gen_features(200, 10, FeatureDist.parse("t:2.1"), rng)
        data = flip_labels(gen_logistic(X, beta, rng), 0.1, rng)
        res = cross_validate(
            data, LOGISTIC, "weighted_mle", (sched, math.inf), (math.inf,), (1.0,),
            folds=5, seed=substream(13, "cv_logi_folds", rep),
            flip_p=0.1, opts=opts,
        )
        finite += bool(np.isfinite(res.tau1))
    assert finite >= 30


# --- trials and experiments ---


def _clean_linear_config(**exp_overrides):
    raw = {
        "experiment": {
            "name": "clean",
            "model": "linear_highdim",
            "n_grid": [40],
            "d": 6,
            "beta_pattern": "five_ones",
            "feature_dists": ["gaussian"],
            "trials": 2,
            "base_seed": 7,
        },
        "methods": [{"name": "mle_raw", "estimator": "mle"}],
    }
    raw["experiment"].update(exp_overrides)
    return ExperimentConfig.from_dict(raw)


def test_run_trial_recovers_noiseless_truth():
    cfg = _clean_linear_config()
    assert run_trial(cfg, 40, "gaussian", "mle_raw", 0) <= 1e-8


def test_run_trial_is_deterministic():
    cfg = _clean_linear_config(n_grid=[60], trials=3)
    a = run_trial(cfg, 60, "gaussian", "mle_raw", 2)
    assert a == run_trial(cfg, 60, "gaussian", "mle_raw", 2)
    assert a != run_trial(cfg, 60, "gaussian", "mle_raw", 1)


def test_run_trial_rejects_unknown_cell():
    cfg = _clean_linear_config()
    with pytest.raises(ValueError):
        run_trial(cfg, 41, "gaussian", "mle_raw", 0)
    with pytest.raises(ValueError):
        run_trial(cfg, 40, "t:4.1", "mle_raw", 0)
    with pytest.raises(ValueError):
        run_trial(cfg, 40, "gaussian", "ols", 0)
    with pytest.raises(ValueError):
        run_trial(cfg, 40, "gaussian", "mle_raw", -1)


def test_run_trial_highdim_sparse_recovery():
    # 1000-dimensional 5-sparse truth from 500 noisy rows: the penalized fit
    # with a cross-validated penalty beats the zero predictor (error sqrt(5))
    raw = {
        "experiment": {
            "name": "highdim",
            "model": "linear_highdim",
            "n_grid": [500],
            "d": 1000,
            "beta_pattern": "five_ones",
            "feature_dists": ["gaussian"],
            "trials": 1,
            "base_seed": 3,
        },
        "corruption": {"kind": "additive_noise", "noise_dist": "gaussian", "target_sd": 5.0},
        "solver": {"grad_tol": 1e-5, "max_iters": 2000},
        "methods": [{"name": "l1_cv", "estimator": "l1", "lambda": "cv"}],
    }
    cfg = ExperimentConfig.from_dict(raw)
    err = run_trial(cfg, 500, "gaussian", "l1_cv", 0)
    assert math.isfinite(err)
    assert err < math.sqrt(5.0)


def test_run_experiment_matches_manual_trials():
    cfg = _clean_linear_config(
        n_grid=[40, 60], trials=3,
        feature_dists=["gaussian", "t:4.1"],
    )
    table = run_experiment(cfg)
    keys = [(r.method, r.feature_dist, r.n) for r in table.rows]
    assert keys == [
        ("mle_raw", "gaussian", 40), ("mle_raw", "gaussian", 60),
        ("mle_raw", "t:4.1", 40), ("mle_raw", "t:4.1", 60),
    ]
    for row in table.rows:
        manual = [run_trial(cfg, row.n, row.feature_dist, "mle_raw", t) for t in range(3)]
        assert row.mean_l2_error == pytest.approx(np.mean(manual), rel=1e-15)
        assert row.trials == 3 and row.failures == 0


def test_run_experiment_single_trial_has_zero_stderr():
    table = run_experiment(_clean_linear_config(trials=1))
    assert table.rows[0].stderr == 0.0
    assert table.rows[0].trials == 1


def test_run_experiment_worker_count_is_invisible():
    cfg = _clean_linear_config(trials=4)
    assert run_experiment(cfg, workers=1).to_csv() == run_experiment(cfg, workers=2).to_csv()
    with pytest.raises(ValueError):
        run_experiment(cfg, workers=0)


# --- error tables ---


def test_error_table_csv_format():
    table = ErrorTable(rows=(ErrorRow("m", "gaussian", 100, 0.5, 0.25, 10, 0),))
    assert table.to_csv() == CSV_HEADER + "\nm,gaussian,100,0.5,0.25,10,0\n"


def test_error_table_roundtrip_and_cell(tmp_path):
    table = run_experiment(_clean_linear_config(trials=2))
    assert ErrorTable.from_csv(table.to_csv()) == table
    path = tmp_path / "table.csv"
    table.write_csv(path)
    assert ErrorTable.from_csv(path.read_text()) == table
    row = table.cell("mle_raw", "gaussian", 40)
    assert row.n == 40
    with pytest.raises(KeyError):
        table.cell("mle_raw", "gaussian", 999)


def test_error_table_rejects_malformed_csv():
    with pytest.raises(ValueError):
        ErrorTable.from_csv("method,n\nm,1\n")
    with pytest.raises(ValueError):
        ErrorTable.from_csv(CSV_HEADER + "\nm,gaussian,100,0.5\n")


# --- curvature probe ---


def test_sphere_directions_unit_norm_and_determinism():
    dirs = sphere_directions(8, 200, substream(31, "dirs"))
    assert dirs.shape == (200, 8)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    again = sphere_directions(8, 200, substream(31, "dirs"))
    assert np.array_equal(dirs, again)
    assert not np.array_equal(dirs, sphere_directions(8, 200, substream(32, "dirs")))


def test_sphere_directions_support_restriction():
    support = [1, 4]
    dirs = sphere_directions(6, 50, 0, support=support)
    off = np.delete(dirs, support, axis=1)
    assert np.all(off == 0.0)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)


def test_sphere_directions_rejects_bad_support():
    with pytest.raises(ValueError):
        sphere_directions(0, 5, 0)
    with pytest.raises(ValueError):
        sphere_directions(5, 0, 0)
    with pytest.raises(ValueError):
        sphere_directions(5, 3, 0, support=[])
    with pytest.raises(ValueError):
        sphere_directions(5, 3, 0, support=[1, 1])
    with pytest.raises(ValueError):
        sphere_directions(5, 3, 0, support=[5])


def _curvature_data(n, d, seed):
    X = gen_features(n, d, FeatureDist(), substream(seed, "X"))
    return Dataset(X=X, z=np.zeros(n))


def test_lrsc_probe_linear_matches_quadratic_form():
    data = _curvature_data(100, 5, 51)
    beta_star = np.arange(5, dtype=np.float64)
    res = lrsc_probe(LINEAR, data, beta_star, radius=0.5, num_directions=64, seed=9)
    dirs = sphere_directions(5, 64, 9)
    cov = data.X.T @ data.X / data.n
    expected = 0.5 * np.einsum("ij,jk,ik->i", dirs, cov, dirs)
    assert np.max(np.abs(res.ratios - expected)) <= 1e-10
    assert res.min_ratio == res.ratios.min()


def test_lrsc_probe_linear_is_radius_free():
    data = _curvature_data(100, 5, 53)
    a = lrsc_probe(LINEAR, data, np.zeros(5), radius=0.5, num_directions=32, seed=2)
    b = lrsc_probe(LINEAR, data, np.zeros(5), radius=4.0, num_directions=32, seed=2)
    assert np.allclose(a.ratios, b.ratios, rtol=1e-9)


def test_lrsc_probe_logistic_positive_curvature():
    X = gen_features(300, 5, FeatureDist(), substream(57, "X"))
    data = Dataset(X=X, z=(X[:, 0] > 0).astype(float))
    res = lrsc_probe(LOGISTIC, data, np.zeros(5), radius=0.5, num_directions=100, seed=4)
    assert res.min_ratio > 0.0
    assert res.ratios.shape == (100,)


def test_lrsc_probe_support_keeps_directions_in_cone():
    data = _curvature_data(80, 6, 59)
    res = lrsc_probe(LINEAR, data, np.zeros(6), radius=1.0, num_directions=40,
                     seed=8, support=[0, 2])
    off = np.delete(res.min_direction, [0, 2])
    assert np.all(off == 0.0)
    assert np.linalg.norm(res.min_direction) == pytest.approx(1.0, abs=1e-12)


def test_lrsc_probe_rejects_bad_inputs():
    data = _curvature_data(30, 4, 61)
    with pytest.raises(ValueError):
        lrsc_probe(LINEAR, data, np.zeros(3), radius=1.0, num_directions=5, seed=0)
    with pytest.raises(ValueError):
        lrsc_probe(LINEAR, data, np.zeros(4), radius=0.0, num_directions=5, seed=0)
