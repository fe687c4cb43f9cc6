"""Monte Carlo benchmark harness for the shrinkage estimators.

Ties the other modules together: an experiment is a grid of (method, feature
distribution, sample size) cells, each cell is a batch of seeded independent
trials, and every trial scores one fitted coefficient vector against the truth
that generated its dataset.  Thresholds and penalties marked ``cv`` in a
method are selected by K-fold cross-validation on held-out prediction loss.
Also houses the empirical curvature probe used to check restricted strong
convexity of the shrunk loss.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math

import numpy as np
import yaml

from ._validation import as_finite_vector, check_positive
from .datagen import (
    CorruptionSpec,
    FeatureDist,
    as_generator,
    flip_labels,
    gen_features,
    gen_linear,
    gen_logistic,
    make_beta,
    substream,
)
from .glm import Dataset, get_family, nll_terms, taylor_remainder
from .optimize import DivergenceError, SolverOpts, default_lambda, fit_l1, fit_mle
from .shrink import FEATURE_MODES, RESPONSE_MODES, ShrinkSpec, apply_shrink, default_tau

MODELS = ("linear_highdim", "logistic_lowdim", "logistic_highdim")
ESTIMATORS = ("mle", "weighted_mle", "l1", "weighted_l1")
SELECTION_SCOPES = ("cell", "trial")

_WEIGHTED = ("weighted_mle", "weighted_l1")
_PENALIZED = ("l1", "weighted_l1")


class ConfigError(ValueError):
    """Invalid experiment configuration, tagged with the offending key path."""

    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


def _axis_value(value, name, active, allow_inf):
    """Normalize a tau/lambda setting to None, 'auto', 'cv', or a number."""
    if not active:
        if value is not None:
            raise ValueError(f"{name} was given but its mode is inactive")
        return None
    if value is None:
        return "auto"
    if isinstance(value, str):
        word = value.strip().lower()
        if word in ("auto", "cv"):
            return word
        try:
            value = float(word)
        except ValueError:
            raise ValueError(
                f"{name} must be a positive number, 'auto', or 'cv', got {value!r}"
            ) from None
    return check_positive(value, name, allow_inf=allow_inf)


@dataclasses.dataclass(frozen=True)
class Method:
    """One estimator column of the benchmark.

    ``tau1``, ``tau2``, and ``lam`` each accept a positive number, ``"auto"``
    (the theoretical schedule with multiplier 1), or ``"cv"`` (selected by
    cross-validation over the multiplier grid in SelectionSpec).  Axes whose
    mode is inactive must stay None.
    """

    name: str
    estimator: str
    feature_mode: str = "none"
    response_mode: str = "none"
    tau1: float | str | None = None
    tau2: float | str | None = None
    lam: float | str | None = None
    preserve_sign: bool = True

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ValueError("method name must be a nonempty string")
        if any(ch in self.name for ch in ",\n\r"):
            raise ValueError(f"method name {self.name!r} may not contain commas or newlines")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )
        if self.response_mode not in RESPONSE_MODES:
            raise ValueError(
                f"response_mode must be one of {RESPONSE_MODES}, got {self.response_mode!r}"
            )
        object.__setattr__(
            self,
            "tau1",
            _axis_value(self.tau1, "tau1", self.feature_mode != "none", allow_inf=True),
        )
        object.__setattr__(
            self,
            "tau2",
            _axis_value(self.tau2, "tau2", self.response_mode != "none", allow_inf=True),
        )
        object.__setattr__(
            self,
            "lam",
            _axis_value(self.lam, "lambda", self.estimator in _PENALIZED, allow_inf=False),
        )
        object.__setattr__(self, "preserve_sign", bool(self.preserve_sign))

    def to_dict(self):
        return {
            "name": self.name,
            "estimator": self.estimator,
            "feature_mode": self.feature_mode,
            "response_mode": self.response_mode,
            "tau1": self.tau1,
            "tau2": self.tau2,
            "lambda": self.lam,
            "preserve_sign": self.preserve_sign,
        }


@dataclasses.dataclass(frozen=True)
class SelectionSpec:
    """How cross-validated parameters are chosen.

    Grids are multipliers of the theoretical schedules; the infinite tau
    multiplier means "no shrinkage" and lets CV opt out of preprocessing.
    ``scope="cell"`` selects once per (dist, n) cell on a pilot dataset and
    reuses the choice for every trial; ``scope="trial"`` reselects on each
    trial's own data.
    """

    folds: int = 5
    scope: str = "cell"
    tau_multipliers: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, math.inf)
    lambda_multipliers: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)

    def __post_init__(self):
        folds = int(self.folds)
        if folds < 2:
            raise ValueError(f"folds must be at least 2, got {self.folds}")
        object.__setattr__(self, "folds", folds)
        if self.scope not in SELECTION_SCOPES:
            raise ValueError(f"scope must be one of {SELECTION_SCOPES}, got {self.scope!r}")
        taus = tuple(check_positive(m, "tau_multipliers", allow_inf=True)
                     for m in self.tau_multipliers)
        lams = tuple(check_positive(m, "lambda_multipliers") for m in self.lambda_multipliers)
        if not taus or not lams:
            raise ValueError("multiplier grids must be nonempty")
        object.__setattr__(self, "tau_multipliers", taus)
        object.__setattr__(self, "lambda_multipliers", lams)

    def to_dict(self):
        return {
            "folds": self.folds,
            "scope": self.scope,
            "tau_multipliers": list(self.tau_multipliers),
            "lambda_multipliers": list(self.lambda_multipliers),
        }


def _family_kind(model):
    return "linear" if model.startswith("linear") else "logistic"


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one benchmark: design grid, corruption, methods."""

    name: str
    model: str
    n_grid: tuple
    d: int
    beta_pattern: str
    feature_dists: tuple
    corruption: CorruptionSpec
    methods: tuple
    trials: int
    base_seed: int
    selection: SelectionSpec = SelectionSpec()
    solver: SolverOpts = SolverOpts()

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        object.__setattr__(self, "d", int(self.d))
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid:
            raise ValueError("n_grid must be nonempty")
        if grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"n_grid must be positive and strictly ascending, got {grid}")
        object.__setattr__(self, "n_grid", grid)
        make_beta(self.d, self.beta_pattern)  # fails fast on pattern/d mismatch
        dists = tuple(
            dist if isinstance(dist, FeatureDist) else FeatureDist.parse(str(dist))
            for dist in self.feature_dists
        )
        if not dists:
            raise ValueError("feature_dists must be nonempty")
        if len({dist.label() for dist in dists}) != len(dists):
            raise ValueError("feature_dists must be distinct")
        object.__setattr__(self, "feature_dists", dists)
        if not isinstance(self.corruption, CorruptionSpec):
            raise ValueError("corruption must be a CorruptionSpec")
        if self.model.startswith("linear") and self.corruption.kind == "label_flip":
            raise ValueError("label_flip corruption requires a logistic model")
        if self.model.startswith("logistic") and self.corruption.kind == "additive_noise":
            raise ValueError("additive_noise corruption requires the linear model")
        methods = tuple(self.methods)
        if not methods or not all(isinstance(m, Method) for m in methods):
            raise ValueError("methods must be a nonempty sequence of Method")
        if len({m.name for m in methods}) != len(methods):
            raise ValueError("method names must be unique")
        if self.model.startswith("linear"):
            for m in methods:
                if m.estimator in _WEIGHTED:
                    raise ValueError(
                        f"method {m.name!r}: weighted estimators require a logistic model"
                    )
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "trials", int(self.trials))
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        object.__setattr__(self, "base_seed", int(self.base_seed))
        if self.base_seed < 0:
            raise ValueError(f"base_seed must be nonnegative, got {self.base_seed}")
        if not isinstance(self.selection, SelectionSpec):
            raise ValueError("selection must be a SelectionSpec")
        if not isinstance(self.solver, SolverOpts):
            raise ValueError("solver must be a SolverOpts")

    @property
    def family_kind(self):
        return _family_kind(self.model)

    def to_dict(self):
        """Nested dict mirroring the config file schema (round-trips)."""
        corruption = {"kind": self.corruption.kind}
        if self.corruption.kind == "additive_noise":
            corruption["noise_dist"] = self.corruption.noise_dist.label()
            corruption["target_sd"] = self.corruption.target_sd
        elif self.corruption.kind == "label_flip":
            corruption["flip_p"] = self.corruption.flip_p
        return {
            "experiment": {
                "name": self.name,
                "model": self.model,
                "n_grid": list(self.n_grid),
                "d": self.d,
                "beta_pattern": self.beta_pattern,
                "feature_dists": [dist.label() for dist in self.feature_dists],
                "trials": self.trials,
                "base_seed": self.base_seed,
            },
            "corruption": corruption,
            "selection": self.selection.to_dict(),
            "solver": self.solver.to_dict(),
            "methods": [m.to_dict() for m in self.methods],
        }

    @classmethod
    def from_dict(cls, raw):
        return _config_from_dict(raw)


# --- config file parsing ---------------------------------------------------

def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _as_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected a mapping, got {type(obj).__name__}")
    return obj


def _reject_unknown(mapping, allowed, path):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(_join(path, key), f"unknown key (allowed: {', '.join(allowed)})")


_MISSING = object()


def _get(mapping, key, path, default=_MISSING):
    if key in mapping:
        return mapping[key]
    if default is _MISSING:
        raise ConfigError(_join(path, key), "required key is missing")
    return default


def _as_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _as_number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_str(value, path):
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a string, got {value!r}")
    return value


def _as_bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    return value


def _as_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {value!r}")
    return value


def _build(factory, path, **kwargs):
    """Construct a validated dataclass, re-tagging its errors with the path."""
    try:
        return factory(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_corruption(section, path):
    section = _as_mapping(section, path)
    kind = _as_str(_get(section, "kind", path), _join(path, "kind"))
    if kind == "none":
        _reject_unknown(section, ("kind",), path)
        return CorruptionSpec(kind="none")
    if kind == "additive_noise":
        _reject_unknown(section, ("kind", "noise_dist", "target_sd"), path)
        label = _as_str(_get(section, "noise_dist", path), _join(path, "noise_dist"))
        dist = _build(FeatureDist.parse, _join(path, "noise_dist"), text=label)
        sd = _as_number(_get(section, "target_sd", path), _join(path, "target_sd"))
        return _build(CorruptionSpec, path, kind=kind, noise_dist=dist, target_sd=sd)
    if kind == "label_flip":
        _reject_unknown(section, ("kind", "flip_p"), path)
        p = _as_number(_get(section, "flip_p", path), _join(path, "flip_p"))
        return _build(CorruptionSpec, path, kind=kind, flip_p=p)
    raise ConfigError(_join(path, "kind"), f"unknown corruption kind {kind!r}")


def _parse_selection(section, path):
    section = _as_mapping(section, path)
    allowed = ("folds", "scope", "tau_multipliers", "lambda_multipliers")
    _reject_unknown(section, allowed, path)
    defaults = SelectionSpec()
    kwargs = {}
    if "folds" in section:
        kwargs["folds"] = _as_int(section["folds"], _join(path, "folds"))
    if "scope" in section:
        kwargs["scope"] = _as_str(section["scope"], _join(path, "scope"))
    for key in ("tau_multipliers", "lambda_multipliers"):
        if key in section:
            entries = _as_list(section[key], _join(path, key))
            kwargs[key] = tuple(
                _as_number(v, f"{_join(path, key)}[{i}]") for i, v in enumerate(entries)
            )
        else:
            kwargs[key] = getattr(defaults, key)
    return _build(SelectionSpec, path, **kwargs)


def _parse_solver(section, path):
    section = _as_mapping(section, path)
    allowed = ("max_iters", "grad_tol", "step_init", "backtrack_factor", "backtrack_c")
    _reject_unknown(section, allowed, path)
    kwargs = {}
    for key in allowed:
        if key in section:
            sub = _join(path, key)
            kwargs[key] = (
                _as_int(section[key], sub) if key == "max_iters"
                else _as_number(section[key], sub)
            )
    return _build(SolverOpts, path, **kwargs)


def _parse_method(entry, path):
    entry = _as_mapping(entry, path)
    allowed = ("name", "estimator", "feature_mode", "response_mode",
               "tau1", "tau2", "lambda", "preserve_sign")
    _reject_unknown(entry, allowed, path)
    kwargs = {
        "name": _as_str(_get(entry, "name", path), _join(path, "name")),
        "estimator": _as_str(_get(entry, "estimator", path), _join(path, "estimator")),
    }
    for key in ("feature_mode", "response_mode"):
        if key in entry:
            kwargs[key] = _as_str(entry[key], _join(path, key))
    for key, attr in (("tau1", "tau1"), ("tau2", "tau2"), ("lambda", "lam")):
        if key in entry and entry[key] is not None:
            value = entry[key]
            sub = _join(path, key)
            if not isinstance(value, (str, int, float)) or isinstance(value, bool):
                raise ConfigError(sub, f"expected a number, 'auto', or 'cv', got {value!r}")
            kwargs[attr] = value
    if "preserve_sign" in entry:
        kwargs["preserve_sign"] = _as_bool(entry["preserve_sign"], _join(path, "preserve_sign"))
    return _build(Method, path, **kwargs)


def _config_from_dict(raw):
    raw = _as_mapping(raw, "")
    _reject_unknown(raw, ("experiment", "corruption", "selection", "solver", "methods"), "")

    exp = _as_mapping(_get(raw, "experiment", ""), "experiment")
    allowed = ("name", "model", "n_grid", "d", "beta_pattern",
               "feature_dists", "trials", "base_seed")
    _reject_unknown(exp, allowed, "experiment")
    name = _as_str(_get(exp, "name", "experiment"), "experiment.name")
    model = _as_str(_get(exp, "model", "experiment"), "experiment.model")
    n_grid = tuple(
        _as_int(v, f"experiment.n_grid[{i}]")
        for i, v in enumerate(_as_list(_get(exp, "n_grid", "experiment"), "experiment.n_grid"))
    )
    d = _as_int(_get(exp, "d", "experiment"), "experiment.d")
    pattern = _as_str(_get(exp, "beta_pattern", "experiment"), "experiment.beta_pattern")
    dist_labels = _as_list(_get(exp, "feature_dists", "experiment"), "experiment.feature_dists")
    dists = tuple(
        _build(FeatureDist.parse, f"experiment.feature_dists[{i}]",
               text=_as_str(v, f"experiment.feature_dists[{i}]"))
        for i, v in enumerate(dist_labels)
    )
    trials = _as_int(_get(exp, "trials", "experiment"), "experiment.trials")
    base_seed = _as_int(_get(exp, "base_seed", "experiment"), "experiment.base_seed")

    corruption = (
        _parse_corruption(raw["corruption"], "corruption")
        if "corruption" in raw else CorruptionSpec(kind="none")
    )
    selection = (
        _parse_selection(raw["selection"], "selection")
        if "selection" in raw else SelectionSpec()
    )
    solver = _parse_solver(raw["solver"], "solver") if "solver" in raw else SolverOpts()
    entries = _as_list(_get(raw, "methods", ""), "methods")
    if not entries:
        raise ConfigError("methods", "at least one method is required")
    methods = tuple(_parse_method(entry, f"methods[{i}]") for i, entry in enumerate(entries))

    return _build(
        ExperimentConfig, "experiment",
        name=name, model=model, n_grid=n_grid, d=d, beta_pattern=pattern,
        feature_dists=dists, corruption=corruption, methods=methods,
        trials=trials, base_seed=base_seed, selection=selection, solver=solver,
    )


def load_config(path):
    """Parse an experiment config file (nested key/value sections)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"config file is not valid: {exc}") from None
    if raw is None:
        raise ConfigError("", "config file is empty")
    return _config_from_dict(raw)


# --- scoring ---------------------------------------------------------------

def l2_error(beta_hat, beta_star):
    """Euclidean distance between an estimate and the truth."""
    beta_hat = as_finite_vector(beta_hat, "beta_hat")
    beta_star = as_finite_vector(beta_star, "beta_star")
    if beta_hat.shape != beta_star.shape:
        raise ValueError(
            f"dimension mismatch: beta_hat has {beta_hat.shape[0]} entries, "
            f"beta_star has {beta_star.shape[0]}"
        )
    return float(np.linalg.norm(beta_hat - beta_star))


# --- cross-validation ------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class CvPoint:
    tau1: float
    tau2: float
    lam: float
    loss: float


@dataclasses.dataclass(frozen=True)
class CvResult:
    """Selected (tau1, tau2, lambda) plus the held-out loss of every grid point."""

    tau1: float
    tau2: float
    lam: float
    points: tuple


def _fit_estimator(family, data, estimator, lam, opts, weighted_p):
    if estimator in _PENALIZED:
        return fit_l1(family, data, lam, opts, weighted_p=weighted_p)
    return fit_mle(family, data, opts, weighted_p=weighted_p)


def _holdout_loss(family, beta, X_held, z_held):
    # raw held-out rows: squared prediction error (linear) or plain nll (logistic)
    eta = X_held @ beta
    if family.kind == "linear":
        resid = z_held - eta
        return float(np.mean(resid * resid))
    return float(np.mean(nll_terms(family, eta, z_held)))


def cross_validate(data, family, estimator, tau1_grid, tau2_grid, lambda_grid,
                   folds=5, seed=0, feature_mode="norm_shrink_l4",
                   response_mode="none", preserve_sign=True, flip_p=None, opts=None):
    """Pick (tau1, tau2, lambda) by K-fold held-out prediction loss.

    Folds are contiguous blocks of one seeded row permutation.  Training rows
    are shrunk at each candidate (tau1, tau2); held-out rows stay raw, so all
    candidates compete on the same prediction task.  An infinite tau means no
    shrinkage.  Ties prefer larger tau1, then tau2, then larger lambda.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    folds = int(folds)
    if folds < 2:
        raise ValueError(f"folds must be at least 2, got {folds}")
    if data.n < folds:
        raise ValueError(f"need at least as many rows as folds, got n={data.n} < {folds}")
    tau1_grid = tuple(float(t) for t in tau1_grid)
    tau2_grid = tuple(float(t) for t in tau2_grid)
    lambda_grid = tuple(float(v) for v in lambda_grid)
    if not tau1_grid or not tau2_grid or not lambda_grid:
        raise ValueError("all three grids must be nonempty")
    weighted_p = None
    if estimator in _WEIGHTED:
        if flip_p is None:
            raise ValueError(f"estimator {estimator!r} needs flip_p")
        weighted_p = float(flip_p)
    if estimator in _PENALIZED:
        for lam in lambda_grid:
            check_positive(lam, "lambda_grid entry")

    rng = as_generator(seed)
    blocks = np.array_split(rng.permutation(data.n), folds)
    splits = [
        (np.concatenate(blocks[:k] + blocks[k + 1:]), blocks[k])
        for k in range(folds)
    ]

    points = []
    for tau1 in tau1_grid:
        for tau2 in tau2_grid:
            spec = ShrinkSpec(
                feature_mode=feature_mode,
                tau1=tau1 if feature_mode != "none" else None,
                response_mode=response_mode,
                tau2=tau2 if response_mode != "none" else None,
                preserve_response_sign=preserve_sign,
            )
            shrunk = apply_shrink(data, spec)
            # row-wise ops commute with row subsetting, so shrink once and slice
            fold_sets = [
                (Dataset(X=shrunk.X[tr], z=shrunk.z[tr]), data.X[te], data.z[te])
                for tr, te in splits
            ]
            for lam in lambda_grid:
                total = 0.0
                failed = False
                for train, X_held, z_held in fold_sets:
                    try:
                        fit = _fit_estimator(family, train, estimator, lam, opts, weighted_p)
                    except DivergenceError:
                        failed = True
                        break
                    total += _holdout_loss(family, fit.beta_hat, X_held, z_held)
                loss = math.inf if failed else total / folds
                points.append(CvPoint(tau1=tau1, tau2=tau2, lam=lam, loss=loss))

    best = min(points, key=lambda p: (p.loss, -p.tau1, -p.tau2, -p.lam))
    return CvResult(tau1=best.tau1, tau2=best.tau2, lam=best.lam, points=tuple(points))


# --- trial execution -------------------------------------------------------

def _simulate_cell(config, n, dist, rng):
    """One dataset drawn from the config's generative law at (dist, n)."""
    beta_star = make_beta(config.d, config.beta_pattern)
    X = gen_features(n, config.d, dist, rng)
    if config.model.startswith("linear"):
        if config.corruption.kind == "additive_noise":
            data = gen_linear(X, beta_star, config.corruption, rng)
        else:
            y = X @ beta_star
            data = Dataset(X=X, z=y, y_clean=y)
    else:
        data = gen_logistic(X, beta_star, rng)
        if config.corruption.kind == "label_flip":
            data = flip_labels(data, config.corruption.flip_p, rng)
    return data, beta_star


def _weighted_p_for(config, method):
    if method.estimator not in _WEIGHTED:
        return None
    if config.corruption.kind == "label_flip":
        return config.corruption.flip_p
    return 0.0


def _tau1_scale(feature_mode):
    return "log_d" if feature_mode == "elementwise_clip" else "log_n"


def _tau2_scale(model):
    return "log_d" if model.endswith("highdim") else "log_n"


def _resolve_method(config, method, n, dist, data=None, trial_index=None):
    """Turn a method's tau/lambda settings into a concrete (ShrinkSpec, lam).

    ``auto`` resolves to the schedule at multiplier 1; ``cv`` cross-validates
    over the SelectionSpec multiplier grids.  With cell scope the CV data is
    a pilot dataset drawn from a dedicated seed stream, so the choice is a
    pure function of the cell; with trial scope it is the trial's own data.
    """
    sel = config.selection
    shrink_features = method.feature_mode != "none"
    clip_response = method.response_mode != "none"
    penalized = method.estimator in _PENALIZED

    base_tau1 = (
        default_tau(n, _tau1_scale(method.feature_mode), d=config.d)
        if shrink_features else None
    )
    base_tau2 = (
        default_tau(n, _tau2_scale(config.model), d=config.d)
        if clip_response else None
    )
    base_lam = default_lambda(n, config.d) if penalized else None

    def fixed(setting, base):
        return base if setting == "auto" else float(setting)

    if "cv" not in (method.tau1, method.tau2, method.lam):
        tau1 = fixed(method.tau1, base_tau1) if shrink_features else None
        tau2 = fixed(method.tau2, base_tau2) if clip_response else None
        lam = fixed(method.lam, base_lam) if penalized else None
    else:
        if method.tau1 == "cv":
            tau1_grid = tuple(m * base_tau1 for m in sel.tau_multipliers)
        else:
            tau1_grid = (fixed(method.tau1, base_tau1),) if shrink_features else (math.inf,)
        if method.tau2 == "cv":
            tau2_grid = tuple(m * base_tau2 for m in sel.tau_multipliers)
        else:
            tau2_grid = (fixed(method.tau2, base_tau2),) if clip_response else (math.inf,)
        if method.lam == "cv":
            lambda_grid = tuple(m * base_lam for m in sel.lambda_multipliers)
        else:
            lambda_grid = (fixed(method.lam, base_lam),) if penalized else (0.0,)

        if sel.scope == "cell":
            pilot_rng = substream(config.base_seed, "cv_data", dist.label(), int(n))
            cv_data, _ = _simulate_cell(config, n, dist, pilot_rng)
            fold_seed = substream(
                config.base_seed, "cv_folds", dist.label(), int(n), method.name
            )
        else:
            if data is None:
                raise ValueError("trial-scope selection needs the trial dataset")
            cv_data = data
            fold_seed = substream(
                config.base_seed, "cv_folds", dist.label(), int(n),
                method.name, int(trial_index),
            )
        result = cross_validate(
            cv_data, get_family(config.family_kind), method.estimator,
            tau1_grid, tau2_grid, lambda_grid,
            folds=sel.folds, seed=fold_seed,
            feature_mode=method.feature_mode, response_mode=method.response_mode,
            preserve_sign=method.preserve_sign,
            flip_p=_weighted_p_for(config, method), opts=config.solver,
        )
        tau1 = result.tau1 if shrink_features else None
        tau2 = result.tau2 if clip_response else None
        lam = result.lam if penalized else None

    spec = ShrinkSpec(
        feature_mode=method.feature_mode, tau1=tau1,
        response_mode=method.response_mode, tau2=tau2,
        preserve_response_sign=method.preserve_sign,
    )
    return spec, lam


def _trial_error(config, method, dist, n, trial_index, resolved):
    rng = substream(config.base_seed, "trial", dist.label(), int(n), int(trial_index))
    data, beta_star = _simulate_cell(config, n, dist, rng)
    if resolved is None:
        resolved = _resolve_method(config, method, n, dist, data=data, trial_index=trial_index)
    spec, lam = resolved
    shrunk = apply_shrink(data, spec)
    family = get_family(config.family_kind)
    try:
        fit = _fit_estimator(
            family, shrunk, method.estimator, lam, config.solver,
            _weighted_p_for(config, method),
        )
    except DivergenceError:
        return math.nan  # failed-trial marker, counted separately in the table
    return l2_error(fit.beta_hat, beta_star)


def _trial_worker(args):
    return _trial_error(*args)


def _lookup_dist(config, dist):
    dist = dist if isinstance(dist, FeatureDist) else FeatureDist.parse(str(dist))
    for candidate in config.feature_dists:
        if candidate.label() == dist.label():
            return candidate
    labels = [c.label() for c in config.feature_dists]
    raise ValueError(f"distribution {dist.label()!r} is not in the config (has {labels})")


def _lookup_method(config, method):
    if isinstance(method, Method):
        if method in config.methods:
            return method
        raise ValueError(f"method {method.name!r} is not one of the config's methods")
    for candidate in config.methods:
        if candidate.name == method:
            return candidate
    names = [m.name for m in config.methods]
    raise ValueError(f"method {method!r} is not in the config (has {names})")


def run_trial(config, n, dist, method, trial_index):
    """Score one seeded trial: generate, shrink, fit, return the l2 error.

    Deterministic in (config, n, dist, method, trial_index); solver divergence
    comes back as NaN so the caller can count it as a failure.
    """
    dist = _lookup_dist(config, dist)
    method = _lookup_method(config, method)
    n = int(n)
    if n not in config.n_grid:
        raise ValueError(f"n={n} is not in the config grid {config.n_grid}")
    trial_index = int(trial_index)
    if trial_index < 0:
        raise ValueError(f"trial_index must be nonnegative, got {trial_index}")
    return _trial_error(config, method, dist, n, trial_index, None)


# --- aggregation -----------------------------------------------------------

CSV_HEADER = "method,feature_dist,n,mean_l2_error,stderr,trials,failures"


@dataclasses.dataclass(frozen=True)
class ErrorRow:
    """One (method, distribution, n) cell: mean error over successful trials."""

    method: str
    feature_dist: str
    n: int
    mean_l2_error: float
    stderr: float
    trials: int
    failures: int


@dataclasses.dataclass(frozen=True)
class ErrorTable:
    rows: tuple

    def cell(self, method, feature_dist, n):
        for row in self.rows:
            if (row.method, row.feature_dist, row.n) == (method, feature_dist, int(n)):
                return row
        raise KeyError(f"no row for ({method!r}, {feature_dist!r}, {n})")

    def to_csv(self):
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.method},{r.feature_dist},{r.n},"
                f"{r.mean_l2_error:.17g},{r.stderr:.17g},{r.trials},{r.failures}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError(f"expected header {CSV_HEADER!r}")
        rows = []
        for line in lines[1:]:
            parts = line.split(",")
            if len(parts) != 7:
                raise ValueError(f"expected 7 fields, got {len(parts)}: {line!r}")
            rows.append(ErrorRow(
                method=parts[0], feature_dist=parts[1], n=int(parts[2]),
                mean_l2_error=float(parts[3]), stderr=float(parts[4]),
                trials=int(parts[5]), failures=int(parts[6]),
            ))
        return cls(rows=tuple(rows))


def _aggregate(method, dist, n, errors):
    errors = np.asarray(errors, dtype=np.float64)
    ok = errors[np.isfinite(errors)]
    failures = int(errors.size - ok.size)
    if ok.size == 0:
        mean, stderr = math.nan, math.nan
    else:
        mean = float(np.mean(ok))
        stderr = float(np.std(ok, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
    return ErrorRow(
        method=method.name, feature_dist=dist.label(), n=int(n),
        mean_l2_error=mean, stderr=stderr, trials=int(ok.size), failures=failures,
    )


def run_experiment(config, workers=1):
    """Run every (method, dist, n) cell of the config and tabulate mean errors.

    A pure function of the config: per-trial seeds are derived from the cell
    and trial index, results are aggregated in trial order, and cell-scope
    parameter selection happens once up front, so the table is bit-identical
    for any worker count.
    """
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")

    cells = [
        (method, dist, n)
        for method in config.methods
        for dist in config.feature_dists
        for n in config.n_grid
    ]
    resolved = {}
    if config.selection.scope == "cell":
        for method, dist, n in cells:
            resolved[(method.name, dist.label(), n)] = _resolve_method(config, method, n, dist)

    tasks = [
        (config, method, dist, n, trial, resolved.get((method.name, dist.label(), n)))
        for method, dist, n in cells
        for trial in range(config.trials)
    ]
    if workers == 1:
        errors = [_trial_worker(task) for task in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 4))
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(_trial_worker, tasks, chunksize=chunk))

    rows = []
    for i, (method, dist, n) in enumerate(cells):
        cell_errors = errors[i * config.trials:(i + 1) * config.trials]
        rows.append(_aggregate(method, dist, n, cell_errors))
    return ErrorTable(rows=tuple(rows))


# --- restricted strong convexity probe -------------------------------------

def sphere_directions(d, num_directions, seed, support=None):
    """Unit vectors sampled uniformly on the sphere in R^d.

    With ``support`` given, mass outside the support is zeroed before
    renormalizing, which lands every direction inside the restricted cone
    (the off-support l1 mass is zero).
    """
    d = int(d)
    num_directions = int(num_directions)
    if d < 1 or num_directions < 1:
        raise ValueError(f"need d >= 1 and num_directions >= 1, got d={d}, "
                         f"num_directions={num_directions}")
    if support is not None:
        support = np.asarray(support, dtype=np.intp).ravel()
        if support.size == 0:
            raise ValueError("support must be nonempty when given")
        if support.size != np.unique(support).size:
            raise ValueError("support indices must be distinct")
        if support.min() < 0 or support.max() >= d:
            raise ValueError(f"support indices must lie in [0, {d})")
    rng = as_generator(seed)
    vecs = rng.standard_normal((num_directions, d))
    if support is not None:
        keep = np.zeros(d, dtype=bool)
        keep[support] = True
        vecs = vecs * keep
    norms = np.linalg.norm(vecs, axis=1)
    # an exactly-zero draw has probability zero; pin it to a coordinate axis
    for i in np.nonzero(norms == 0.0)[0]:
        vecs[i, support[0] if support is not None else 0] = 1.0
        norms[i] = 1.0
    return vecs / norms[:, np.newaxis]


@dataclasses.dataclass(frozen=True)
class LrscResult:
    """Worst observed curvature ratio over the sampled directions."""

    min_ratio: float
    min_direction: np.ndarray
    ratios: np.ndarray


def lrsc_probe(family, data, beta_star, radius, num_directions, seed, support=None):
    """Empirical strong-convexity check of the loss around beta_star.

    Samples displacements Delta of norm ``radius`` uniformly on the sphere
    (restricted to the given support, if any) and returns the minimum of
    taylor_remainder(beta_star + Delta) / ||Delta||^2 together with the
    minimizing displacement.  A positive minimum certifies curvature at this
    radius in every sampled direction.
    """
    beta_star = as_finite_vector(beta_star, "beta_star")
    if beta_star.shape[0] != data.d:
        raise ValueError(
            f"beta_star has {beta_star.shape[0]} entries but data has d={data.d}"
        )
    radius = check_positive(radius, "radius")
    directions = sphere_directions(data.d, num_directions, seed, support=support)
    r_sq = radius * radius
    ratios = np.empty(directions.shape[0], dtype=np.float64)
    for i in range(directions.shape[0]):
        step = beta_star + radius * directions[i]
        ratios[i] = taylor_remainder(family, data, step, beta_star) / r_sq
    best = int(np.argmin(ratios))
    return LrscResult(
        min_ratio=float(ratios[best]),
        min_direction=radius * directions[best],
        ratios=ratios,
    )
