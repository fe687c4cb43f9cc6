"""Deterministic shrinkage and clipping preprocessors.

Heavy-tailed rows are tamed before likelihood evaluation: whole feature
vectors are rescaled so their l4 (or l2) norm stays below a threshold, or
individual entries are clipped, and responses are capped in magnitude.  All
operators are pure, idempotent contractions.
"""

import dataclasses
import math

import numpy as np

from ._validation import as_finite_vector, check_positive
from .glm import Dataset

FEATURE_MODES = ("none", "norm_shrink_l4", "norm_shrink_l2", "elementwise_clip")
RESPONSE_MODES = ("none", "clip")


@dataclasses.dataclass(frozen=True)
class ShrinkSpec:
    """Which preprocessor to apply to features and responses.

    ``tau1`` caps the feature side (vector norm or entry magnitude depending
    on ``feature_mode``); ``tau2`` caps the response magnitude.  Either side
    may be switched off with mode ``"none"``, in which case its threshold is
    ignored.
    """

    feature_mode: str = "none"
    tau1: float | None = None
    response_mode: str = "none"
    tau2: float | None = None
    preserve_response_sign: bool = True

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )
        if self.response_mode not in RESPONSE_MODES:
            raise ValueError(
                f"response_mode must be one of {RESPONSE_MODES}, got {self.response_mode!r}"
            )
        if self.feature_mode != "none":
            check_positive(self.tau1, "tau1", allow_inf=True)
        if self.response_mode != "none":
            check_positive(self.tau2, "tau2", allow_inf=True)

    def to_dict(self):
        return {
            "feature_mode": self.feature_mode,
            "tau1": self.tau1,
            "response_mode": self.response_mode,
            "tau2": self.tau2,
            "preserve_sign": self.preserve_response_sign,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature_mode=d.get("feature_mode", "none"),
            tau1=d.get("tau1"),
            response_mode=d.get("response_mode", "none"),
            tau2=d.get("tau2"),
            preserve_response_sign=bool(d.get("preserve_sign", True)),
        )


def _row_norms(X, norm):
    if norm == "l2":
        return np.sqrt(np.sum(X * X, axis=1))
    if norm == "l4":
        sq = X * X
        return np.sum(sq * sq, axis=1) ** 0.25
    raise ValueError(f"norm must be 'l2' or 'l4', got {norm!r}")


def _norm_shrink_rows(X, tau, norm):
    """Rescale each row so its selected norm is at most tau.

    Rows already inside the ball come back bitwise unchanged (scale 1.0);
    zero rows stay zero without any division.
    """
    norms = _row_norms(X, norm)
    scale = np.ones_like(norms)
    over = norms > tau
    scale[over] = tau / norms[over]
    return X * scale[:, np.newaxis]


def norm_shrink(x, tau, norm="l4"):
    """Shrink a vector toward the origin so its l4/l2 norm is capped at tau."""
    x = as_finite_vector(x, "x")
    tau = check_positive(tau, "tau", allow_inf=True)
    return _norm_shrink_rows(x[np.newaxis, :], tau, norm)[0]


def elementwise_clip(x, tau):
    """Clip each entry to magnitude at most tau, preserving its sign."""
    x = as_finite_vector(x, "x")
    tau = check_positive(tau, "tau", allow_inf=True)
    return np.clip(x, -tau, tau)


def clip_response(z, tau, preserve_sign=True):
    """Cap a response at magnitude tau.

    ``preserve_sign=True`` keeps the sign: sign(z) * min(|z|, tau).  With
    ``preserve_sign=False`` the magnitude itself is returned, min(|z|, tau),
    which discards the sign of large-magnitude negative responses.
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"z must be finite, got {z}")
    tau = check_positive(tau, "tau", allow_inf=True)
    if preserve_sign:
        return math.copysign(min(abs(z), tau), z) if z != 0.0 else 0.0
    return min(abs(z), tau)


def _clip_responses(z, tau, preserve_sign):
    if preserve_sign:
        return np.clip(z, -tau, tau)
    return np.minimum(np.abs(z), tau)


def apply_shrink(dataset, spec):
    """Return a new Dataset with the ShrinkSpec's row-wise transforms applied.

    Simulation bookkeeping (clean responses, flip record) passes through
    untouched; the input dataset is not mutated.
    """
    X = dataset.X
    z = dataset.z
    try:
        if spec.feature_mode == "norm_shrink_l4":
            X = _norm_shrink_rows(X, spec.tau1, "l4")
        elif spec.feature_mode == "norm_shrink_l2":
            X = _norm_shrink_rows(X, spec.tau1, "l2")
        elif spec.feature_mode == "elementwise_clip":
            X = np.clip(X, -spec.tau1, spec.tau1)
        if spec.response_mode == "clip":
            z = _clip_responses(z, spec.tau2, spec.preserve_response_sign)
    except (ValueError, FloatingPointError) as exc:
        bad = np.flatnonzero(~np.isfinite(dataset.X).all(axis=1))
        row = int(bad[0]) if bad.size else "?"
        raise ValueError(f"shrink failed at row {row}: {exc}") from exc
    return Dataset(X=X, z=z, y_clean=dataset.y_clean, flip_mask=dataset.flip_mask)


def default_tau(n, scale="log_n", multiplier=1.0, d=None):
    """Threshold schedule ``multiplier * (n / log n)**(1/4)``.

    ``scale="log_d"`` substitutes ``log d`` for ``log n`` (the
    high-dimensional schedule) and requires ``d``.  ``n`` may be passed as a
    real-valued budget; natural logarithms throughout.
    """
    n = float(n)
    multiplier = check_positive(multiplier, "multiplier")
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if scale == "log_n":
        denom = math.log(n)
    elif scale == "log_d":
        if d is None or d < 2:
            raise ValueError(f"log_d scale requires d >= 2, got {d}")
        denom = math.log(d)
    else:
        raise ValueError(f"scale must be 'log_n' or 'log_d', got {scale!r}")
    return multiplier * (n / denom) ** 0.25
