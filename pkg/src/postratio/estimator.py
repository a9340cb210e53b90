"""The rescaled empirical objective, its derivatives and the Newton fit.

For a problem with p-side weights ``w`` and q-side log-likelihoods ``a_j``::

    l(delta) = -sum_i w_i <delta, f_p_i>
               + logsumexp_j(a_j + <delta, f_q_j>) - log n_q
               + ridge * |delta|^2 / 2

The objective omits the delta-independent constant ``-log q_hat(y_q)``, so
with unit likelihoods ``l(0) = 0``.  The function is convex; its Hessian is
the ratio-weighted covariance of the q-side features.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, SolverFailureError
from .problem import PreProblem, _check_delta, softmax_weights

ARMIJO_C = 1e-4
SHRINK = 0.5
MAX_BACKTRACK = 60
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


class _Terms(NamedTuple):
    """Array view of a problem, possibly with rescaled feature columns."""

    Fp: np.ndarray
    Fq: np.ndarray
    w: np.ndarray
    loglik_q: np.ndarray
    ridge: float

    @classmethod
    def of(cls, problem: PreProblem) -> _Terms:
        w = softmax_weights(problem.loglik_p)
        return cls(problem.Fp, problem.Fq, w, problem.loglik_q, problem.ridge)


def _value(t: _Terms, delta: np.ndarray) -> float:
    # far trial points may overflow; newton_minimize reports that as a solver failure
    with np.errstate(over="ignore", invalid="ignore"):
        lin = -float(t.w @ (t.Fp @ delta))
        lse = float(logsumexp(t.loglik_q + t.Fq @ delta)) - math.log(t.Fq.shape[0])
        return lin + lse + 0.5 * t.ridge * float(delta @ delta)


def _derivs(t: _Terms, delta: np.ndarray, need_hess: bool):
    with np.errstate(over="ignore", invalid="ignore"):
        z = t.loglik_q + t.Fq @ delta
        lin = -float(t.w @ (t.Fp @ delta))
        penalty = 0.5 * t.ridge * float(delta @ delta)
    lse = float(logsumexp(z))
    v = softmax_weights(z)
    value = lin + lse - math.log(t.Fq.shape[0]) + penalty
    mean_q = v @ t.Fq
    grad = mean_q - t.w @ t.Fp + t.ridge * delta
    hess = None
    if need_hess:
        C = t.Fq - mean_q
        hess = (C * v[:, None]).T @ C
        hess = 0.5 * (hess + hess.T)
        if t.ridge:
            hess = hess + t.ridge * np.eye(delta.size)
    return value, grad, hess


def objective(problem: PreProblem, delta) -> float:
    """Rescaled empirical KL objective at ``delta`` (constant term dropped)."""
    delta = _check_delta(problem, delta)
    return _value(_Terms.of(problem), delta)


def gradient(problem: PreProblem, delta) -> np.ndarray:
    """``sum_j v_j(delta) f_q_j - sum_i w_i f_p_i + ridge * delta``.

    A zero gradient is exactly the empirical moment-matching condition.
    """
    delta = _check_delta(problem, delta)
    return _derivs(_Terms.of(problem), delta, False)[1]


def hessian(problem: PreProblem, delta) -> np.ndarray:
    """v-weighted covariance of the q-side features, plus ``ridge * I``."""
    delta = _check_delta(problem, delta)
    return _derivs(_Terms.of(problem), delta, True)[2]


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None


def evaluate(problem: PreProblem, delta, with_hessian: bool = False) -> ObjectiveEval:
    """Value, gradient and optionally Hessian in one pass."""
    delta = _check_delta(problem, delta)
    value, grad, hess = _derivs(_Terms.of(problem), delta, with_hessian)
    return ObjectiveEval(value, grad, hess)


@dataclass
class FitResult:
    """Outcome of :func:`fit`.  ``solver_path`` holds ``(iteration, objective, grad_norm)``."""

    delta_hat: np.ndarray
    objective: float
    grad_norm: float
    hessian_at_opt: np.ndarray
    iterations: int
    converged: bool
    solver_path: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "delta_hat": self.delta_hat,
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "hessian_at_opt": self.hessian_at_opt,
            "iterations": self.iterations,
            "converged": self.converged,
            "solver_path": [list(rec) for rec in self.solver_path],
        }


class NewtonResult(NamedTuple):
    x: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray
    iterations: int
    converged: bool
    path: list


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # smallest lambda in {0, 1e-12, 1e-11, ...} for which H + lambda I factors
    eye = np.eye(g.size)
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))) if H.size else 1.0)
    for lam in [0.0] + [scale * 10.0**p for p in range(-12, 13)]:
        try:
            L = np.linalg.cholesky(H + lam * eye)
        except np.linalg.LinAlgError:
            continue
        y = np.linalg.solve(L, -g)
        step = np.linalg.solve(L.T, y)
        if np.all(np.isfinite(step)):
            return step
    return -g


def newton_minimize(
    fun: Callable[[np.ndarray, bool], tuple],
    x0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> NewtonResult:
    """Damped Newton with Armijo backtracking for smooth convex functions.

    ``fun(x, need_hess)`` returns ``(value, grad, hess_or_None)``.  Stops when
    the gradient 2-norm is at most ``tol``.  Running out of iterations is
    reported through ``converged=False``; a non-finite trial value raises
    :class:`SolverFailureError`.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("initial point is not finite")
    f, g, H = fun(x, True)
    if not np.isfinite(f):
        raise SolverFailureError(f"objective is not finite at the initial point ({f})")
    path = [(0, f, float(np.linalg.norm(g)))]
    it = 0
    while path[-1][2] > tol and it < max_iter:
        step = _newton_direction(H, g)
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
        t = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            x_new = x + t * step
            if np.array_equal(x_new, x):
                break
            f_new = fun(x_new, False)[0]
            if not np.isfinite(f_new):
                raise SolverFailureError(f"objective became {f_new} during line search at iteration {it + 1}")
            if f_new <= f + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= SHRINK
        if not accepted:
            # near the optimum Armijo drowns in rounding; take the full step if it
            # raises the value by no more than rounding and shrinks the gradient
            x_new = x + step
            f_new, g_new, H_new = fun(x_new, True)
            slack = 64 * np.finfo(float).eps * max(1.0, abs(f))
            if f_new <= f + slack and np.linalg.norm(g_new) < path[-1][2]:
                x, f, g, H = x_new, f_new, g_new, H_new
                it += 1
                path.append((it, f, float(np.linalg.norm(g))))
                continue
            break
        x = x_new
        f, g, H = fun(x, True)
        it += 1
        path.append((it, f, float(np.linalg.norm(g))))
    gnorm = path[-1][2]
    return NewtonResult(x, f, g, H, it, gnorm <= tol, path)


def fit(
    problem: PreProblem,
    init=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    standardize: bool = False,
) -> FitResult:
    """Minimize the objective and return the ratio parameter estimate.

    Parameters
    ----------
    problem : PreProblem
    init : array-like, optional
        Starting point, zero by default.
    tol : float
        Target 2-norm of the gradient.
    max_iter : int
        Newton iteration cap; hitting it gives ``converged=False``.
    standardize : bool
        First solve (ridge-free) in z-scored feature coordinates, pooled over
        both sample sets, then polish in the original coordinates.  The
        estimate keeps its original meaning.
    """
    terms = _Terms.of(problem)
    x0 = np.zeros(problem.k) if init is None else _check_delta(problem, init)
    iters = 0
    if standardize:
        pooled = np.vstack([terms.Fp, terms.Fq])
        scale = pooled.std(axis=0)
        scale[scale <= 0] = 1.0
        # scaling columns of F is the reparametrization delta -> delta * scale
        scaled = terms._replace(Fp=terms.Fp / scale, Fq=terms.Fq / scale, ridge=0.0)
        pre = newton_minimize(lambda d, h: _derivs(scaled, d, h), x0 * scale, tol, max_iter)
        x0 = pre.x / scale
        iters = pre.iterations

    res = newton_minimize(lambda d, h: _derivs(terms, d, h), x0, tol, max(max_iter - iters, 1))
    # the recorded path is the original-coordinate stage, where values are comparable
    path = [(iters + i, f, g) for i, f, g in res.path]
    return FitResult(
        res.x, res.value, float(np.linalg.norm(res.grad)), res.hess, iters + res.iterations, res.converged, path
    )
