"""Entropy dual of the estimator and its residual certificate.

Inner stage: over the simplex, minimize ``sum_i mu_i log mu_i - mu_i log l_q(x_i)``
subject to ``|target - Fq.T mu| <= r_n`` where ``target = sum_i w_i f_p_i``.
It is solved with an augmented Lagrangian whose subproblems are handled by
entropic (multiplicative) mirror descent.

Outer stage: ``delta_dual`` minimizes the gap between the ratio-reweighted
q-side feature mean and ``Fq.T mu_hat``.  This is done through the smooth
convex surrogate ``logsumexp(log l_q + Fq delta) - <delta, Fq.T mu_hat>``
whose stationary points zero that gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls
from scipy.special import logsumexp

from .errors import InfeasibleConstraintError, InvalidInputError
from .estimator import FitResult, newton_minimize
from .problem import PreProblem, WeightVector, softmax_weights

DEFAULT_TOL = 1e-8
MAX_PENALTY = 1e4


@dataclass
class DualResult:
    mu: WeightVector
    delta_dual: np.ndarray
    moment_gap: float
    r_n: float
    residual_eqn: float
    converged: bool
    inner_iterations: int
    outer_iterations: int
    multiplier: np.ndarray

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.weights,
            "delta_dual": self.delta_dual,
            "moment_gap": self.moment_gap,
            "r_n": self.r_n,
            "residual_eqn": self.residual_eqn,
            "converged": self.converged,
            "inner_iterations": self.inner_iterations,
            "outer_iterations": self.outer_iterations,
            "multiplier": self.multiplier,
        }


def radius_schedule(r3: float, n_p: int, n_q: int) -> float:
    """Constraint radius ``R_3 / sqrt(min(n_p, n_q))``; ``R_3`` is user supplied."""
    if r3 < 0:
        raise InvalidInputError("R_3 must be nonnegative")
    return r3 / math.sqrt(min(n_p, n_q))


def min_hull_distance(F: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance from ``target`` to the convex hull of the rows of ``F``.

    The simplex equality is enforced through a heavily weighted extra row in
    a nonnegative least-squares problem.
    """
    n = F.shape[0]
    scale = max(1.0, float(np.abs(F).max()), float(np.abs(target).max()))
    heavy = 1e4 * scale
    A = np.vstack([F.T, heavy * np.ones((1, n))])
    b = np.concatenate([target, [heavy]])
    mu, _ = nnls(A, b, maxiter=50 * max(n, 10))
    mu = mu / mu.sum()
    return float(np.linalg.norm(F.T @ mu - target)), mu


def _ball_project(u: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.linalg.norm(u))
    if norm <= radius:
        return u
    return u * (radius / norm) if radius > 0 else np.zeros_like(u)


def _kl_from_logratio(mu: np.ndarray, d: np.ndarray) -> float:
    """KL(mu+ || mu) for ``mu+ = mu * exp(d)``, accurate when ``d`` is tiny."""
    small = np.abs(d) < 1e-3
    phi = np.empty_like(d)
    ds = d[small]
    phi[small] = ds * ds * (0.5 + ds * (1.0 / 3.0 + ds / 8.0))
    dl = d[~small]
    phi[~small] = dl * np.exp(dl) - np.expm1(dl)
    return float(mu @ phi)


def _inner_solve(loglik, F, lam, rho, radius, log_mu, tau, tau_safe, tol, max_iter):
    """Minimize the augmented Lagrangian over the simplex by mirror descent.

    The entropy term is kept exact (composite step), so an iteration with
    step ``tau`` is ``log mu <- (log mu + tau (log l_q - grad)) / (1 + tau)``
    up to normalization.  ``tau`` grows by 2 each step and is halved, never
    below ``tau_safe``, until ``rho/2 |F.T (mu+ - mu)|^2 <= KL(mu+ || mu) / tau``.
    """
    it = 0
    mu = np.exp(log_mu)
    for it in range(1, max_iter + 1):
        u = F.T @ mu
        s = _ball_project(u + lam / rho, radius)
        drive = loglik - F @ (lam + rho * (u - s))
        tau = min(2.0 * tau, 1e12)
        while True:
            new = (log_mu + tau * drive) / (1.0 + tau)
            new -= logsumexp(new)
            d = new - log_mu
            diff = mu * np.expm1(d)
            du = F.T @ diff
            if tau <= tau_safe or 0.5 * rho * float(du @ du) * tau <= _kl_from_logratio(mu, d):
                break
            tau = max(0.5 * tau, tau_safe)
        change = float(np.max(np.abs(diff)))
        log_mu, mu = new, mu + diff
        if change < tol:
            break
    return log_mu, it, tau


def solve_dual(
    problem: PreProblem,
    r_n: float = 0.0,
    tol: float = DEFAULT_TOL,
    max_outer: int = 200,
    max_inner: int = 20000,
) -> DualResult:
    """Solve the two-stage dual program.

    Parameters
    ----------
    problem : PreProblem
    r_n : float
        Radius of the moment constraint; 0 gives the exact Lagrangian dual.
    tol : float
        Target for the constraint violation and for the outer-stage gradient.

    Raises
    ------
    InfeasibleConstraintError
        When the p-side target is farther than ``r_n`` from the convex hull of
        the q-side features.
    """
    if not (np.isfinite(r_n) and r_n >= 0):
        raise InvalidInputError("r_n must be a nonnegative number")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    F = problem.Fq
    k = F.shape[1]
    w = softmax_weights(problem.loglik_p)
    target = w @ problem.Fp
    loglik = problem.loglik_q

    hull_gap, _ = min_hull_distance(F, target)
    feas_tol = 1e-9 * max(1.0, float(np.abs(F).max()))
    if hull_gap > r_n + feas_tol:
        raise InfeasibleConstraintError(
            f"moment constraint is infeasible: target is {hull_gap:.6g} from the q-side feature hull (r_n={r_n})",
            gap=hull_gap,
        )

    # sum(mu) = 1, so measuring features from the target changes nothing but
    # shrinks max |f|^2, which sets the mirror-descent step
    Fc = F - target
    fmax2 = max(float(np.max(np.einsum("ij,ij->i", Fc, Fc))), 1e-12)
    tau = 0.5 / fmax2
    lam = np.zeros(k)
    rho = 1.0
    log_mu = loglik - logsumexp(loglik)
    violation = math.inf
    inner_total = 0
    outer = 0
    converged = False
    for outer in range(1, max_outer + 1):
        tau_safe = 0.5 / (rho * fmax2)
        log_mu, used, tau = _inner_solve(loglik, Fc, lam, rho, r_n, log_mu, tau, tau_safe, tol * 1e-2, max_inner)
        inner_total += used
        mu = np.exp(log_mu - logsumexp(log_mu))
        u = Fc.T @ mu
        s = _ball_project(u + lam / rho, r_n)
        lam = lam + rho * (u - s)
        new_violation = max(float(np.linalg.norm(u)) - r_n, 0.0)
        if new_violation <= tol:
            converged = True
            break
        if new_violation > 0.25 * violation and rho < MAX_PENALTY:
            rho *= 10.0
            tau /= 10.0
        violation = new_violation

    mu = softmax_weights(log_mu)
    mu_target = F.T @ mu
    moment_gap = float(np.linalg.norm(target - mu_target))

    def surrogate(delta, need_hess):
        z = loglik + F @ delta
        v = softmax_weights(z)
        m = v @ F
        value = float(logsumexp(z)) - float(delta @ mu_target)
        hess = None
        if need_hess:
            C = F - m
            hess = (C * v[:, None]).T @ C
            hess = 0.5 * (hess + hess.T)
        return value, m - mu_target, hess

    outer_res = newton_minimize(surrogate, -lam if np.all(np.isfinite(lam)) else np.zeros(k), tol * 1e-2, 200)
    delta_dual = outer_res.x
    residual = residual_eqn(problem, delta_dual, mu)
    return DualResult(
        WeightVector(mu),
        delta_dual,
        moment_gap,
        float(r_n),
        residual,
        converged and outer_res.converged,
        inner_total,
        outer,
        lam,
    )


def residual_eqn(problem: PreProblem, delta, mu) -> float:
    """``|sum_j v_j(delta) f_q_j - sum_i mu_i f_q_i|``."""
    mu = np.asarray(mu, dtype=float)
    v = softmax_weights(problem.loglik_q + problem.Fq @ np.asarray(delta, dtype=float))
    return float(np.linalg.norm(v @ problem.Fq - mu @ problem.Fq))


def dual_primal_gap(problem: PreProblem, dual: DualResult, fit: FitResult) -> float:
    """Distance between the dual and primal estimates."""
    if not (dual.converged and fit.converged):
        raise InvalidInputError("both the dual and the primal solve must have converged")
    return float(np.linalg.norm(np.asarray(dual.delta_dual) - np.asarray(fit.delta_hat)))
