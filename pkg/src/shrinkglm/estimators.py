"""Scikit-learn style wrappers around the shrinkage preprocessors and solvers.

These are thin adapters: ``FeatureShrinker`` is a stateless-per-row
transformer, and the two ``RobustGlm*`` estimators bundle shrinkage,
threshold schedules, and the likelihood solvers behind the usual
``fit``/``predict``/``get_params`` surface.  The functional API in the other
modules remains the primary one; use these when composing with pipelines.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_binary, check_flip_probability
from .glm import Dataset, get_family
from .optimize import SolverOpts, default_lambda, fit_l1, fit_mle
from .shrink import ShrinkSpec, apply_shrink, default_tau

_SHRINK_MODES = {
    "none": "none",
    "l4": "norm_shrink_l4",
    "l2": "norm_shrink_l2",
    "clip": "elementwise_clip",
}


def _feature_mode(shrink):
    try:
        return _SHRINK_MODES[shrink]
    except KeyError:
        raise ValueError(
            f"shrink must be one of {tuple(_SHRINK_MODES)}, got {shrink!r}"
        ) from None


def _tau_scale(shrink):
    # elementwise clipping follows the high-dimensional (n / log d) schedule
    return "log_d" if shrink == "clip" else "log_n"


def _resolve_threshold(setting, n, d, scale):
    if setting == "auto":
        return default_tau(n, scale, d=d)
    return float(setting)


class FeatureShrinker(TransformerMixin, BaseEstimator):
    """Cap the norm (or entries) of each feature row at a threshold.

    Parameters
    ----------
    shrink : {"l4", "l2", "clip", "none"}, default "l4"
        Row-wise operation: cap the l4 or l2 norm preserving direction, clip
        entries at the threshold, or pass rows through.
    tau : float or "auto", default "auto"
        Threshold.  "auto" uses the schedule (n / log n)**(1/4) at fit time,
        with log d replacing log n for clipping.
    """

    def __init__(self, shrink="l4", tau="auto"):
        self.shrink = shrink
        self.tau = tau

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        _feature_mode(self.shrink)
        self.n_features_in_ = X.shape[1]
        if self.shrink == "none":
            self.tau_ = None
        else:
            self.tau_ = _resolve_threshold(
                self.tau, X.shape[0], X.shape[1], _tau_scale(self.shrink)
            )
        return self

    def transform(self, X):
        check_is_fitted(self, "tau_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        mode = _feature_mode(self.shrink)
        if mode == "none":
            return X.copy()
        spec = ShrinkSpec(feature_mode=mode, tau1=self.tau_)
        return apply_shrink(Dataset(X=X, z=np.zeros(X.shape[0])), spec).X


class _RobustGlmBase(BaseEstimator):
    """Shared fitting logic for the linear and logistic wrappers."""

    def __init__(self, shrink="none", tau1="auto", clip_response=None,
                 preserve_sign=True, penalty="none", lam="auto",
                 tol=1e-8, max_iter=10000):
        self.shrink = shrink
        self.tau1 = tau1
        self.clip_response = clip_response
        self.preserve_sign = preserve_sign
        self.penalty = penalty
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def _weighted_p(self):
        return None

    def _fit_core(self, X, z):
        n, d = X.shape
        mode = _feature_mode(self.shrink)
        if self.penalty not in ("none", "l1"):
            raise ValueError(f"penalty must be 'none' or 'l1', got {self.penalty!r}")

        self.tau1_ = (
            None if mode == "none"
            else _resolve_threshold(self.tau1, n, d, _tau_scale(self.shrink))
        )
        if self.clip_response in (None, False, "none"):
            self.tau2_ = None
        else:
            self.tau2_ = _resolve_threshold(
                self.clip_response, n, d, _tau_scale(self.shrink)
            )
        self.lambda_ = (
            default_lambda(n, d) if self.penalty == "l1" and self.lam == "auto"
            else (float(self.lam) if self.penalty == "l1" else None)
        )

        spec = ShrinkSpec(
            feature_mode=mode, tau1=self.tau1_,
            response_mode="none" if self.tau2_ is None else "clip", tau2=self.tau2_,
            preserve_response_sign=bool(self.preserve_sign),
        )
        data = apply_shrink(Dataset(X=X, z=z), spec)
        opts = SolverOpts(max_iters=int(self.max_iter), grad_tol=float(self.tol))
        family = get_family(self._family_kind)
        if self.penalty == "l1":
            result = fit_l1(family, data, self.lambda_, opts,
                            weighted_p=self._weighted_p())
        else:
            result = fit_mle(family, data, opts, weighted_p=self._weighted_p())
        self.coef_ = result.beta_hat
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.residual_ = result.final_residual
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X @ self.coef_


class RobustGlmRegressor(RegressorMixin, _RobustGlmBase):
    """Linear model fit on norm-shrunk features and clipped responses.

    With ``shrink="none"`` and ``clip_response=None`` this is ordinary least
    squares (optionally l1-penalized); the shrinkage options trade a little
    bias for resistance to heavy-tailed rows.
    """

    _family_kind = "linear"

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self._fit_core(X, np.asarray(y, dtype=np.float64))

    def predict(self, X):
        return self.decision_function(X)


class RobustGlmClassifier(ClassifierMixin, _RobustGlmBase):
    """Logistic model for 0/1 labels, robust to feature tails and label flips.

    ``flip_p`` is the assumed label-flip probability; when positive, fitting
    minimizes the weighted loss whose expectation under flips matches the
    clean-label loss.
    """

    _family_kind = "logistic"

    def __init__(self, shrink="none", tau1="auto", clip_response=None,
                 preserve_sign=True, penalty="none", lam="auto",
                 flip_p=None, tol=1e-8, max_iter=10000):
        super().__init__(shrink=shrink, tau1=tau1, clip_response=clip_response,
                         preserve_sign=preserve_sign, penalty=penalty, lam=lam,
                         tol=tol, max_iter=max_iter)
        self.flip_p = flip_p

    def _weighted_p(self):
        if self.flip_p is None:
            return None
        return check_flip_probability(self.flip_p, "flip_p")

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = check_binary(np.asarray(y, dtype=np.float64), "y")
        self.classes_ = np.array([0.0, 1.0])
        return self._fit_core(X, y)

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) >= 0.0).astype(np.float64)
