"""Deterministic convex solvers for the (weighted, l1-penalized) likelihood.

``fit_mle`` runs damped Newton with an Armijo backtracking line search and a
gradient-step fallback; ``fit_l1`` runs monotone accelerated proximal
gradient (gradient step, then componentwise soft-thresholding) with
adaptive momentum restarts.  Both start from beta = 0 and report a
sup-norm gradient / KKT residual certificate.
"""

import dataclasses
import math

import numpy as np

from . import glm
from ._validation import check_positive


@dataclasses.dataclass(frozen=True)
class SolverOpts:
    """Iteration limits and line-search constants; seed-independent."""

    max_iters: int = 10000
    grad_tol: float = 1e-8
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    backtrack_c: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        check_positive(self.grad_tol, "grad_tol")
        check_positive(self.step_init, "step_init")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not 0.0 < self.backtrack_c < 1.0:
            raise ValueError("backtrack_c must lie in (0, 1)")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclasses.dataclass(frozen=True)
class FitResult:
    """Solver output: the estimate plus convergence diagnostics."""

    beta_hat: np.ndarray
    iterations: int
    converged: bool
    final_residual: float
    objective: float

    def __post_init__(self):
        beta = np.asarray(self.beta_hat, dtype=np.float64)
        beta.setflags(write=False)
        object.__setattr__(self, "beta_hat", beta)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.final_residual,
            "objective": self.objective,
            "beta_hat": [float(v) for v in self.beta_hat],
        }


class DivergenceError(RuntimeError):
    """Raised when the objective or gradient turns non-finite.

    ``last_beta`` holds the last finite iterate reached before the blow-up.
    """

    def __init__(self, message, last_beta):
        super().__init__(message)
        self.last_beta = np.asarray(last_beta, dtype=np.float64)


def _bounded_eval(f, beta):
    # Candidate steps can overflow to inf/nan before the objective does;
    # treating them as infinitely bad keeps them out of the likelihood code.
    if not np.all(np.isfinite(beta)):
        return math.inf
    return f(beta)


def _objective_fns(family, data, weighted_p):
    if weighted_p is None:
        return (
            lambda beta: glm.nll(family, data, beta),
            lambda beta: glm.grad_nll(family, data, beta),
        )
    if family.kind != "logistic":
        raise ValueError("weighted_p is only defined for the logistic family")
    glm.weighted_nll(data, np.zeros(data.d), weighted_p)  # validates z and p
    return (
        lambda beta: glm.weighted_nll(data, beta, weighted_p),
        lambda beta: glm.weighted_grad(data, beta, weighted_p),
    )


def fit_mle(family, data, opts=None, weighted_p=None):
    """Minimize the (weighted) negative log-likelihood by damped Newton.

    Starts at beta = 0.  When the Hessian solve fails or the Newton
    direction is not a descent direction, the step falls back to steepest
    descent.  Separable logistic data runs toward ever-larger coefficients
    until the flattening gradient drops below ``grad_tol`` or the
    iteration budget is spent; either way the returned iterate is finite.
    """
    opts = opts or SolverOpts()
    f, grad = _objective_fns(family, data, weighted_p)
    # The weighted loss is the plain likelihood in the pseudo-response
    # (z - p) / (1 - 2p); its Hessian is the unweighted one.
    hess = lambda beta: glm.hessian_nll(family, data, beta)

    beta = np.zeros(data.d)
    obj = f(beta)
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        g = grad(beta)
        if not np.all(np.isfinite(g)):
            raise DivergenceError("gradient became non-finite", beta)
        residual = float(np.max(np.abs(g)))
        if residual <= opts.grad_tol:
            iterations -= 1
            break
        direction = None
        try:
            direction = np.linalg.solve(hess(beta), -g)
        except np.linalg.LinAlgError:
            direction = None
        if direction is None or not np.all(np.isfinite(direction)) or g @ direction >= 0:
            direction = -g
        slope = float(g @ direction)
        step = opts.step_init
        new_beta = beta + step * direction
        new_obj = _bounded_eval(f, new_beta)
        while not (np.isfinite(new_obj) and new_obj <= obj + opts.backtrack_c * step * slope):
            step *= opts.backtrack_factor
            if step < 1e-20:
                break
            new_beta = beta + step * direction
            new_obj = _bounded_eval(f, new_beta)
        if step < 1e-20:
            # Line search stalled at floating-point resolution; stop here.
            break
        assert new_obj <= obj + 1e-12 * (1.0 + abs(obj))
        beta, obj = new_beta, new_obj
    final_residual = float(np.max(np.abs(grad(beta))))
    return FitResult(
        beta_hat=beta,
        iterations=iterations,
        converged=final_residual <= opts.grad_tol,
        final_residual=final_residual,
        objective=obj,
    )


def soft_threshold(v, t):
    """Proximal map of ``t * |.|``: sign(v) * max(|v| - t, 0).  sign(0) = 0."""
    v = np.asarray(v, dtype=np.float64)
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def kkt_residual(family, data, beta, lam, weighted_p=None):
    """Sup-norm violation of the l1-penalized stationarity conditions.

    With g the gradient of the smooth part: coordinates with beta_j != 0
    contribute |g_j + lam * sign(beta_j)|; zero coordinates contribute
    max(|g_j| - lam, 0).
    """
    _, grad = _objective_fns(family, data, weighted_p)
    beta = np.asarray(beta, dtype=np.float64)
    g = grad(beta)
    active = beta != 0.0
    res = np.where(
        active,
        np.abs(g + lam * np.sign(beta)),
        np.maximum(np.abs(g) - lam, 0.0),
    )
    return float(np.max(res)) if res.size else 0.0


def _prox_step(beta_from, g_from, f_from, lam, step, f, factor):
    """Backtracked proximal gradient step; returns (z, f(z), step).

    The accepted step satisfies the quadratic majorization bound at the
    start point, which makes the step a descent step for the penalized
    objective when taken from the incumbent iterate.
    """
    while True:
        z = soft_threshold(beta_from - step * g_from, step * lam)
        fz = _bounded_eval(f, z)
        dz = z - beta_from
        bound = f_from + g_from @ dz + 0.5 / step * (dz @ dz)
        if np.isfinite(fz) and fz <= bound + 1e-12 * (1.0 + abs(bound)):
            return z, fz, step
        step *= factor
        if step < 1e-18:
            return z, fz, step


def fit_l1(family, data, lam, opts=None, weighted_p=None):
    """Minimize nll(beta) + lam * ||beta||_1 by accelerated proximal gradient.

    Momentum restarts whenever the accelerated candidate would increase the
    penalized objective, so iterate objectives are nonincreasing.
    Convergence is declared when the KKT residual drops to ``grad_tol``.
    """
    lam = check_positive(lam, "lambda")
    opts = opts or SolverOpts()
    f, grad = _objective_fns(family, data, weighted_p)

    beta = np.zeros(data.d)
    beta_prev = beta
    obj_smooth = f(beta)
    obj = obj_smooth  # penalty is zero at the origin
    t_mom = 1.0
    step = opts.step_init
    iterations = 0
    residual = math.inf
    for iterations in range(1, opts.max_iters + 1):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = beta + ((t_mom - 1.0) / t_next) * (beta - beta_prev)
        if not np.all(np.isfinite(y)):
            y = beta  # extrapolation overflowed; drop the momentum term
        g_y = grad(y)
        if not np.all(np.isfinite(g_y)):
            raise DivergenceError("gradient became non-finite", beta)
        z, fz, step = _prox_step(y, g_y, f(y), lam, step, f, opts.backtrack_factor)
        obj_z = fz + lam * float(np.sum(np.abs(z)))
        if not np.isfinite(obj_z) or obj_z > obj:
            # Restart: drop momentum and take a plain descent step from beta.
            t_next = 1.0
            g_b = grad(beta)
            if not np.all(np.isfinite(g_b)):
                raise DivergenceError("gradient became non-finite", beta)
            z, fz, step = _prox_step(beta, g_b, obj_smooth, lam, step, f, opts.backtrack_factor)
            obj_z = fz + lam * float(np.sum(np.abs(z)))
            if not np.isfinite(obj_z) or obj_z > obj + 1e-12 * (1.0 + abs(obj)):
                # No further progress possible at this precision.
                residual = kkt_residual(family, data, beta, lam, weighted_p)
                break
        assert obj_z <= obj + 1e-12 * (1.0 + abs(obj))
        beta_prev, beta = beta, z
        obj, obj_smooth = obj_z, fz
        t_mom = t_next
        residual = kkt_residual(family, data, beta, lam, weighted_p)
        if residual <= opts.grad_tol:
            break
    return FitResult(
        beta_hat=beta,
        iterations=iterations,
        converged=residual <= opts.grad_tol,
        final_residual=float(residual),
        objective=obj,
    )


def default_lambda(n, d, multiplier=1.0):
    """Penalty scale ``2 * multiplier * sqrt(log d / n)``; natural logarithm."""
    if n < 1 or d < 2:
        raise ValueError(f"need n >= 1 and d >= 2, got n={n}, d={d}")
    check_positive(multiplier, "multiplier")
    return 2.0 * multiplier * math.sqrt(math.log(d) / n)
