"""Sandwich covariance of the estimate and checks of the consistency conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincinv

from .errors import InvalidInputError, SingularInformationError
from .estimator import FitResult, _derivs, _Terms
from .problem import PreProblem, _check_delta, softmax_weights

Z95 = 1.959963984540054
MAX_CONDITION = 1e12


def _sym(A):
    return 0.5 * (A + A.T)


def _cov_uniform(V: np.ndarray) -> np.ndarray:
    """Covariance of the rows of V with 1/n averaging."""
    C = V - V.mean(axis=0)
    return _sym(C.T @ C / V.shape[0])


@dataclass
class AsymptoticReport:
    """Plug-in version of the limiting normal law of ``sqrt(n_p) (delta_hat - delta*)``.

    ``avar = inv(sigma) (sigma_p + ratio_np_nq * sigma_q) inv(sigma)`` and
    ``cov_delta = avar / n_p``.
    """

    delta_hat: np.ndarray
    sigma: np.ndarray
    sigma_p: np.ndarray
    sigma_q: np.ndarray
    ratio_np_nq: float
    avar: np.ndarray
    cov_delta: np.ndarray
    marginal_ci95: np.ndarray  # (k, 2)

    def to_dict(self) -> dict:
        return {
            "delta_hat": self.delta_hat,
            "sigma": self.sigma,
            "sigma_p": self.sigma_p,
            "sigma_q": self.sigma_q,
            "ratio_np_nq": self.ratio_np_nq,
            "avar": self.avar,
            "cov_delta": self.cov_delta,
            "marginal_ci95": self.marginal_ci95,
        }


def asymptotic_report(problem: PreProblem, fit: FitResult) -> AsymptoticReport:
    """Plug-in asymptotic covariance at a converged fit.

    ``sigma`` is the ridge-free Hessian at the estimate, ``sigma_p`` the
    covariance of ``n_p * w_i * f_p_i`` and ``sigma_q`` that of
    ``n_q * v_j * f_q_j``, both with uniform ``1/n`` averaging.

    Raises
    ------
    SingularInformationError
        If ``sigma`` has condition number above 1e12.
    """
    if not fit.converged:
        raise InvalidInputError("asymptotic report needs a converged fit")
    delta = _check_delta(problem, fit.delta_hat)
    terms = _Terms.of(problem)._replace(ridge=0.0)
    _, _, sigma = _derivs(terms, delta, True)
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularInformationError(
            f"Hessian at the estimate is numerically singular (condition number {cond:.3g}); "
            "add a ridge or drop collinear features"
        )
    v = softmax_weights(problem.loglik_q + problem.Fq @ delta)
    sigma_p = _cov_uniform(problem.n_p * terms.w[:, None] * problem.Fp)
    sigma_q = _cov_uniform(problem.n_q * v[:, None] * problem.Fq)
    ratio = problem.n_p / problem.n_q
    inv = np.linalg.inv(sigma)
    avar = _sym(inv @ (sigma_p + ratio * sigma_q) @ inv)
    cov = avar / problem.n_p
    half = Z95 * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    ci = np.column_stack([delta - half, delta + half])
    return AsymptoticReport(delta, sigma, sigma_p, sigma_q, ratio, avar, cov, ci)


def chi2_quantile(level: float, dof: int) -> float:
    """Quantile of the chi-square law through the inverse regularized lower incomplete gamma."""
    return 2.0 * float(gammaincinv(dof / 2.0, level))


def ellipse_coverage(delta_hats, center, cov, level: float = 0.95) -> float:
    """Fraction of points whose Mahalanobis distance exceeds the chi-square ``level`` quantile."""
    if not 0.0 < level < 1.0:
        raise InvalidInputError("level must lie in (0, 1)")
    Z = np.atleast_2d(np.asarray(delta_hats, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    k = cov.shape[0]
    if Z.shape[1] != k:
        Z = Z.reshape(-1, k)
    try:
        L = np.linalg.cholesky(_sym(cov))
    except np.linalg.LinAlgError:
        raise SingularInformationError("covariance is not positive definite") from None
    D = np.linalg.solve(L, (Z - np.asarray(center, dtype=float)).T)
    d2 = np.einsum("ij,ij->j", D, D)
    return float(np.mean(d2 > chi2_quantile(level, k)))


@dataclass
class ConsistencyDiagnostics:
    grad_norm_at_ref: float
    min_eig_ref: float
    min_eig_over_ball: float
    weyl_lower_bound: float
    ball_radius: float
    ratio_stat: float
    argmin_delta: np.ndarray

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _min_eig_and_grad(terms: _Terms, delta: np.ndarray):
    """Smallest Hessian eigenvalue and its gradient with respect to delta.

    d lambda / d delta_k = sum_j v_j ((f_j - m) . u)^2 (f_jk - m_k) for the
    unit eigenvector u, i.e. a third weighted central moment.
    """
    z = terms.loglik_q + terms.Fq @ delta
    v = softmax_weights(z)
    m = v @ terms.Fq
    C = terms.Fq - m
    H = _sym((C * v[:, None]).T @ C)
    vals, vecs = np.linalg.eigh(H)
    u = vecs[:, 0]
    proj = C @ u
    g = (v * proj * proj) @ C
    return float(vals[0]), g, H


def _project(delta, center, radius):
    step = delta - center
    norm = float(np.linalg.norm(step))
    if norm <= radius:
        return delta
    return center + step * (radius / norm)


def consistency_diagnostics(
    problem: PreProblem,
    delta_ref,
    radius: float,
    n_restarts: int = 8,
    seed=0,
    max_iter: int = 100,
) -> ConsistencyDiagnostics:
    """Evaluate the observable quantities behind the consistency conditions.

    The infimum of the smallest Hessian eigenvalue over the ball of ``radius``
    around ``delta_ref`` is found by projected gradient descent from the
    center and ``n_restarts`` random interior points.  Every evaluated point
    also serves as a probe for the Weyl bound
    ``lambda_min(H(ref)) - max ||H(delta) - H(ref)||``, which therefore never
    exceeds the reported infimum.
    """
    if not radius > 0:
        raise InvalidInputError("radius must be positive")
    center = _check_delta(problem, delta_ref)
    terms = _Terms.of(problem)._replace(ridge=0.0)
    k = problem.k
    rng = np.random.default_rng(seed)

    lam_ref, _, H_ref = _min_eig_and_grad(terms, center)
    best_lam, best_delta = lam_ref, center.copy()
    max_dev = 0.0

    starts = [center.copy()]
    for _ in range(n_restarts):
        direction = rng.standard_normal(k)
        direction /= np.linalg.norm(direction)
        starts.append(center + direction * radius * rng.uniform() ** (1.0 / k))

    for start in starts:
        x = start
        lam, g, H = _min_eig_and_grad(terms, x)
        max_dev = max(max_dev, float(np.linalg.norm(H - H_ref, 2)))
        step = radius
        for _ in range(max_iter):
            if lam < best_lam:
                best_lam, best_delta = lam, x.copy()
            gnorm = float(np.linalg.norm(g))
            if gnorm == 0.0:
                break
            improved = False
            while step > radius * 1e-10:
                trial = _project(x - step * g / gnorm, center, radius)
                lam_t, g_t, H_t = _min_eig_and_grad(terms, trial)
                max_dev = max(max_dev, float(np.linalg.norm(H_t - H_ref, 2)))
                if lam_t < lam - 1e-15:
                    x, lam, g = trial, lam_t, g_t
                    improved = True
                    if lam < best_lam:
                        best_lam, best_delta = lam, x.copy()
                    break
                step *= 0.5
            if not improved:
                break
            step = min(2.0 * step, radius)

    gnorm_ref = float(np.linalg.norm(_derivs(terms, center, False)[1]))
    weyl = lam_ref - max_dev
    n_min = min(problem.n_p, problem.n_q)
    ratio = math.sqrt(n_min) * gnorm_ref / best_lam if best_lam > 0 else math.inf
    return ConsistencyDiagnostics(gnorm_ref, lam_ref, best_lam, weyl, float(radius), ratio, best_delta)
