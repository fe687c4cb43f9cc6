"""Robust GLM estimation on shrunk heavy-tailed data.

Feature norms (or entries) and responses are capped at schedule-driven
thresholds before likelihood fitting, which keeps maximum-likelihood and
l1-penalized estimators accurate when features are heavy-tailed, responses
carry additive noise, or binary labels are randomly flipped.
"""

from .bench import (
    ConfigError,
    CvPoint,
    CvResult,
    ErrorRow,
    ErrorTable,
    ExperimentConfig,
    LrscResult,
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
from .datagen import (
    CorruptionSpec,
    FeatureDist,
    flip_labels,
    gen_features,
    gen_linear,
    gen_logistic,
    load_dataset,
    make_beta,
    save_dataset,
    substream,
)
from .estimators import FeatureShrinker, RobustGlmClassifier, RobustGlmRegressor
from .glm import (
    Dataset,
    get_family,
    grad_nll,
    hessian_nll,
    nll,
    taylor_remainder,
    weighted_grad,
    weighted_nll,
)
from .optimize import (
    DivergenceError,
    FitResult,
    SolverOpts,
    default_lambda,
    fit_l1,
    fit_mle,
    kkt_residual,
    soft_threshold,
)
from .shrink import (
    ShrinkSpec,
    apply_shrink,
    clip_response,
    default_tau,
    elementwise_clip,
    norm_shrink,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CorruptionSpec",
    "CvPoint",
    "CvResult",
    "Dataset",
    "DivergenceError",
    "ErrorRow",
    "ErrorTable",
    "ExperimentConfig",
    "FeatureDist",
    "FeatureShrinker",
    "FitResult",
    "LrscResult",
    "Method",
    "RobustGlmClassifier",
    "RobustGlmRegressor",
    "SelectionSpec",
    "ShrinkSpec",
    "SolverOpts",
    "apply_shrink",
    "clip_response",
    "cross_validate",
    "default_lambda",
    "default_tau",
    "elementwise_clip",
    "fit_l1",
    "fit_mle",
    "flip_labels",
    "gen_features",
    "gen_linear",
    "gen_logistic",
    "get_family",
    "grad_nll",
    "hessian_nll",
    "kkt_residual",
    "l2_error",
    "load_config",
    "load_dataset",
    "lrsc_probe",
    "make_beta",
    "nll",
    "norm_shrink",
    "run_experiment",
    "run_trial",
    "save_dataset",
    "soft_threshold",
    "sphere_directions",
    "substream",
    "taylor_remainder",
    "weighted_grad",
    "weighted_nll",
]
