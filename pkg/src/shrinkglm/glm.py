"""GLM families, the dataset container, and exact likelihood quantities.

The canonical-link likelihood is parameterized by the cumulant function
``b``: the per-sample negative log-likelihood is ``-z * eta + b(eta)`` with
``eta = x @ beta``.  The weighted variant reweights each sample against its
label-flipped twin so that the flip-expectation of the weighted loss equals
the clean-label loss.
"""

import dataclasses

import numpy as np
from scipy.special import expit

from ._validation import (
    as_finite_matrix,
    as_finite_vector,
    check_binary,
    check_flip_probability,
)


class GlmFamily:
    """Base class for canonical-link GLM families.

    Subclasses provide the cumulant function ``b`` together with its first
    two derivatives.  The dispersion ``phi`` is fixed to 1.0: it rescales
    the likelihood without moving the minimizer, so it is carried only for
    documentation fidelity.
    """

    kind = None
    phi = 1.0

    def b(self, eta):
        raise NotImplementedError

    def b_prime(self, eta):
        raise NotImplementedError

    def b_double_prime(self, eta):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class LinearFamily(GlmFamily):
    """Gaussian responses: b(eta) = eta^2 / 2."""

    kind = "linear"

    def b(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        return 0.5 * eta * eta

    def b_prime(self, eta):
        return np.asarray(eta, dtype=np.float64)

    def b_double_prime(self, eta):
        return np.ones_like(np.asarray(eta, dtype=np.float64))


class LogisticFamily(GlmFamily):
    """Bernoulli responses: b(eta) = log(1 + exp(eta)), overflow-stable."""

    kind = "logistic"

    def b(self, eta):
        # logaddexp(0, eta) == max(eta, 0) + log1p(exp(-|eta|)), finite for
        # every finite eta.
        return np.logaddexp(0.0, np.asarray(eta, dtype=np.float64))

    def b_prime(self, eta):
        return expit(np.asarray(eta, dtype=np.float64))

    def b_double_prime(self, eta):
        eta = np.asarray(eta, dtype=np.float64)
        # expit(eta) * expit(-eta) is the symmetric, underflow-friendly form
        # of p * (1 - p).
        return expit(eta) * expit(-eta)


_FAMILIES = {"linear": LinearFamily(), "logistic": LogisticFamily()}


def get_family(kind):
    """Return the shared family instance for ``kind`` ('linear'/'logistic')."""
    try:
        return _FAMILIES[kind]
    except KeyError:
        raise ValueError(
            f"unknown family {kind!r}; expected one of {sorted(_FAMILIES)}"
        ) from None


def _readonly(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Immutable (features, responses) container.

    ``y_clean`` and ``flip_mask`` are simulation-only bookkeeping: the
    uncorrupted responses and the rows whose labels were flipped.  They ride
    along untouched through preprocessing so that benchmark scoring can see
    the ground truth.
    """

    X: np.ndarray
    z: np.ndarray
    y_clean: np.ndarray | None = None
    flip_mask: np.ndarray | None = None

    def __post_init__(self):
        X = as_finite_matrix(self.X, "X")
        z = as_finite_vector(self.z, "z")
        if z.shape[0] != X.shape[0]:
            raise ValueError(
                f"z has length {z.shape[0]} but X has {X.shape[0]} rows"
            )
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "z", _readonly(z))
        if self.y_clean is not None:
            y = as_finite_vector(self.y_clean, "y_clean")
            if y.shape[0] != X.shape[0]:
                raise ValueError("y_clean length does not match X")
            object.__setattr__(self, "y_clean", _readonly(y))
        if self.flip_mask is not None:
            m = np.asarray(self.flip_mask, dtype=bool)
            if m.shape != (X.shape[0],):
                raise ValueError("flip_mask length does not match X")
            object.__setattr__(self, "flip_mask", _readonly(m))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def _check_beta(data, beta):
    beta = as_finite_vector(beta, "beta")
    if beta.shape[0] != data.d:
        raise ValueError(
            f"beta has length {beta.shape[0]} but data has {data.d} features"
        )
    return beta


def nll_terms(family, eta, z):
    """Per-sample negative log-likelihood terms ``-z * eta + b(eta)``."""
    eta = np.asarray(eta, dtype=np.float64)
    # Extreme iterates overflow to inf/nan here by design; callers treat any
    # non-finite objective as divergence, so silence the hardware flags.
    with np.errstate(over="ignore", invalid="ignore"):
        return -np.asarray(z, dtype=np.float64) * eta + family.b(eta)


def nll(family, data, beta):
    """Average negative log-likelihood of ``beta`` on ``data``."""
    beta = _check_beta(data, beta)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(nll_terms(family, data.X @ beta, data.z)))


def grad_nll(family, data, beta):
    """Gradient of :func:`nll` with respect to ``beta``."""
    beta = _check_beta(data, beta)
    with np.errstate(over="ignore", invalid="ignore"):
        eta = data.X @ beta
        resid = data.z - family.b_prime(eta)
        return -(data.X.T @ resid) / data.n


def hessian_nll(family, data, beta):
    """Hessian of :func:`nll`: symmetric positive semidefinite d x d."""
    beta = _check_beta(data, beta)
    with np.errstate(over="ignore", invalid="ignore"):
        w = family.b_double_prime(data.X @ beta)
        H = (data.X.T * w) @ data.X / data.n
    # Enforce exact symmetry against floating-point drift.
    return 0.5 * (H + H.T)


def weighted_nll_terms(eta, z, p):
    """Per-sample noisy-label weighted logistic loss terms.

    Each term combines the observed label with its flip:
    ``((1 - p) * l(z) - p * l(1 - z)) / (1 - 2p)``.  Averaging this over the
    flip distribution recovers the clean-label loss exactly.
    """
    p = check_flip_probability(p)
    z = check_binary(z)
    fam = _FAMILIES["logistic"]
    obs = nll_terms(fam, eta, z)
    flipped = nll_terms(fam, eta, 1.0 - z)
    with np.errstate(over="ignore", invalid="ignore"):
        return ((1.0 - p) * obs - p * flipped) / (1.0 - 2.0 * p)


def weighted_nll(data, beta, p):
    """Average weighted logistic loss; can be negative for p > 0."""
    beta = _check_beta(data, beta)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(weighted_nll_terms(data.X @ beta, data.z, p)))


def weighted_grad(data, beta, p):
    """Gradient of :func:`weighted_nll` with respect to ``beta``.

    The weighted combination collapses per sample to the plain logistic
    residual against the shifted pseudo-response ``(z - p) / (1 - 2p)``.
    """
    beta = _check_beta(data, beta)
    p = check_flip_probability(p)
    z = check_binary(data.z)
    with np.errstate(over="ignore", invalid="ignore"):
        eta = data.X @ beta
        pseudo = (z - p) / (1.0 - 2.0 * p)
        resid = pseudo - expit(eta)
        return -(data.X.T @ resid) / data.n


def taylor_remainder(family, data, beta, beta_star, weighted_p=None):
    """First-order Taylor remainder f(beta) - f(beta*) - grad(beta*)^T (beta - beta*).

    With ``weighted_p`` given, f is the weighted logistic loss instead of the
    plain likelihood.  Nonnegative (up to roundoff) for the convex families
    here.
    """
    beta = _check_beta(data, beta)
    beta_star = _check_beta(data, beta_star)
    if weighted_p is not None and family.kind != "logistic":
        raise ValueError("weighted_p is only defined for the logistic family")
    if weighted_p is None:
        f_b = nll(family, data, beta)
        f_s = nll(family, data, beta_star)
        g_s = grad_nll(family, data, beta_star)
    else:
        f_b = weighted_nll(data, beta, weighted_p)
        f_s = weighted_nll(data, beta_star, weighted_p)
        g_s = weighted_grad(data, beta_star, weighted_p)
    return float(f_b - f_s - g_s @ (beta - beta_star))
