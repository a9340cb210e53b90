"""Local linear explanations of a black-box binary classifier.

For labels ``{-1, +1}`` the log ratio ``log p(x | -1) / p(x | +1)`` is fitted
with a linear model over a user-chosen local sample ``X_loc``.  Using
``l_p = P(-1 | x)``, ``l_q = P(+1 | x)`` and ``X_loc`` as both prior sets is
enough: the marginal density of ``X_loc`` cancels in the ratio.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .errors import InvalidInputError
from .estimator import DEFAULT_MAX_ITER, DEFAULT_TOL, fit, newton_minimize
from .features import FeatureMap
from .likelihood import BlackboxLikelihood
from .problem import PreProblem, PriorSampleSet

SURROGATE_NORM_CAP = 50.0


@dataclass
class LinearExplanation:
    """Coefficients of ``log p(x | -1) / p(x | +1)`` and their magnitude ranking.

    The intercept is never estimated (``intercept_known`` stays False); the
    ranking does not depend on it.
    """

    delta: np.ndarray
    feature_magnitudes: list = field(default_factory=list)
    intercept_known: bool = False
    converged: bool = True
    capped: bool = False
    degenerate: bool = False

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float).ravel()
        if not self.feature_magnitudes:
            self.feature_magnitudes = rank_features(self.delta)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "feature_magnitudes": [[i, m] for i, m in self.feature_magnitudes],
            "intercept_known": self.intercept_known,
            "converged": self.converged,
            "capped": self.capped,
            "degenerate": self.degenerate,
        }


def rank_features(delta) -> list:
    """``(index, |delta_i|)`` sorted by decreasing magnitude, ties by index."""
    mags = np.abs(np.asarray(delta, dtype=float))
    order = sorted(range(mags.size), key=lambda i: (-mags[i], i))
    return [(int(i), float(mags[i])) for i in order]


def _as_blackbox(blackbox) -> BlackboxLikelihood:
    if isinstance(blackbox, BlackboxLikelihood):
        return blackbox
    if callable(blackbox):
        return BlackboxLikelihood(blackbox, batched=True)
    raise InvalidInputError("blackbox must be a BlackboxLikelihood or a callable")


def _as_samples(x_loc) -> PriorSampleSet:
    return x_loc if isinstance(x_loc, PriorSampleSet) else PriorSampleSet(x_loc)


def extract_local_linear(
    blackbox,
    x_loc,
    feature: FeatureMap | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warn: bool = True,
) -> LinearExplanation:
    """Fit the local log class-density ratio of ``blackbox`` around ``x_loc``.

    Parameters
    ----------
    blackbox : BlackboxLikelihood or callable
        Gives ``P(y = +1 | x)``.  A bare callable is treated as batched.
    x_loc : PriorSampleSet or array
        Local sample; used as both prior sets.
    feature : FeatureMap, optional
        Identity by default.
    warn : bool
        Emit a RuntimeWarning for a constant black box.  The ``degenerate``
        flag is set either way.
    """
    bb = _as_blackbox(blackbox)
    X = _as_samples(x_loc)
    feature = FeatureMap.identity(X.dim) if feature is None else feature
    probs = bb.probabilities(X.samples)
    degenerate = bool(np.ptp(probs) == 0.0)
    if degenerate and warn:
        warnings.warn("black box is constant over x_loc; the explanation carries no signal", RuntimeWarning)
    problem = PreProblem(bb.complement(), bb, X, X, feature)
    res = fit(problem, tol=tol, max_iter=max_iter)
    return LinearExplanation(res.delta_hat, converged=res.converged, degenerate=degenerate)


def _logistic_fun(X1, t):
    # mean negative log-likelihood of labels t in {0, 1}
    def fun(beta, need_hess):
        z = X1 @ beta
        value = -float(np.mean(t * log_expit(z) + (1 - t) * log_expit(-z)))
        p = expit(z)
        grad = X1.T @ (p - t) / t.size
        hess = None
        if need_hess:
            hess = (X1 * (p * (1 - p))[:, None]).T @ X1 / t.size
        return value, grad, hess

    return fun


def surrogate_baseline(blackbox, x_loc, cap: float = SURROGATE_NORM_CAP, warn: bool = True) -> LinearExplanation:
    """Prediction-matching baseline: logistic regression on hard black-box labels.

    Labels are ``P(+1 | x) >= 0.5``; the model has an intercept.  The returned
    coefficients are the negated slopes, so they describe
    ``log p(x | -1) / p(x | +1)`` like :func:`extract_local_linear`.  Under
    separation the slope norm is capped at ``cap`` and ``capped`` is set.
    ``warn=False`` silences the separation and equal-label warnings.
    """
    bb = _as_blackbox(blackbox)
    X = _as_samples(x_loc).samples
    t = (bb.probabilities(X) >= 0.5).astype(float)
    d = X.shape[1]
    if t.min() == t.max():
        if warn:
                warnings.warn("all hard labels are equal; no surrogate boundary exists", RuntimeWarning)
        return LinearExplanation(np.zeros(d), degenerate=True)
    X1 = np.column_stack([np.ones(X.shape[0]), X])
    fun = _logistic_fun(X1, t)
    res = newton_minimize(fun, np.zeros(d + 1), 1e-10, 100)
    beta = res.x
    capped = False
    if not res.converged or np.linalg.norm(beta[1:]) > cap:
        cons = {"type": "ineq", "fun": lambda b: cap**2 - float(b[1:] @ b[1:]), "jac": lambda b: -2 * np.r_[0.0, b[1:]]}
        start = beta.copy()
        norm = np.linalg.norm(start[1:])
        if norm > cap:
            start[1:] *= cap / norm
        out = minimize(
            lambda b: fun(b, False)[:2], start, jac=True, method="SLSQP", constraints=[cons],
            options={"maxiter": 500, "ftol": 1e-12},
        )
        beta = out.x
        capped = bool(np.linalg.norm(beta[1:]) >= cap * (1 - 1e-6))
        if capped and warn:
            warnings.warn(f"labels are separable; slope norm capped at {cap}", RuntimeWarning)
    return LinearExplanation(-beta[1:], converged=True, capped=capped)


def direction_cosine(a, b) -> float:
    """Cosine of the angle between two coefficient vectors (0 if either is zero)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))
