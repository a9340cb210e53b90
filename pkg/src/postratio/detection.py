"""Latent-signal detection scores and the classical baselines they are compared with.

A detection score compares two observed windows ``y_p`` and ``y_q`` through
the posterior ratio of their latent signals.  Both windows are modelled as
``y = x + noise`` with ``noise ~ N(0, sigma^2 I)`` and two banks of simulated
latent windows serve as the priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateInputError,
    InvalidInputError,
    PostRatioError,
    SolverFailureError,
)
from .estimator import DEFAULT_MAX_ITER, DEFAULT_TOL, fit, objective
from .features import FeatureMap
from .likelihood import GaussianLinearLikelihood, UnitLikelihood
from .problem import PreProblem, PriorSampleSet, softmax_weights

SCORE_MODES = ("objective", "kl")


@dataclass
class DetectionConfig:
    """Settings shared by every window pair.

    ``score_mode="objective"`` reports the fitted objective ``l(delta_hat)``
    without the window-dependent evidence term.  ``"kl"`` reports
    ``l(0) - l(delta_hat)``, which restores ``log q_hat(y_q)`` and flips the
    sign; it estimates the KL divergence between the two posteriors.
    ``prior_delta`` caches the prior-ratio fit used by the plugin score.
    """

    window_len: int
    feature: FeatureMap
    prior_p: PriorSampleSet
    prior_q: PriorSampleSet
    likelihood_sigma: float = 1.0
    stride: int = 1
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    score_mode: str = "objective"
    prior_delta: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.window_len < 2:
            raise InvalidInputError("window_len must be at least 2")
        if self.stride < 1:
            raise InvalidInputError("stride must be at least 1")
        if not (math.isfinite(self.likelihood_sigma) and self.likelihood_sigma > 0):
            raise InvalidInputError("likelihood_sigma must be positive")
        if self.score_mode not in SCORE_MODES:
            raise InvalidInputError(f"score_mode must be one of {SCORE_MODES}")
        for name in ("prior_p", "prior_q"):
            bank = getattr(self, name)
            if not isinstance(bank, PriorSampleSet):
                bank = PriorSampleSet(bank)
                setattr(self, name, bank)
            if bank.dim != self.window_len:
                raise InvalidInputError(f"{name} rows have length {bank.dim}, window_len is {self.window_len}")
        if self.feature.input_dim != self.window_len:
            raise InvalidInputError("feature input_dim must equal window_len")


@dataclass
class DetectionSeries:
    """Scores by window start; failed windows hold NaN."""

    positions: np.ndarray
    scores: np.ndarray

    def rows(self):
        return [(int(p), None if math.isnan(s) else float(s)) for p, s in zip(self.positions, self.scores)]


def _window(y, config: DetectionConfig, name: str) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != config.window_len:
        raise InvalidInputError(f"{name} has length {y.size}, expected window_len={config.window_len}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return y


def window_problem(y_p, y_q, config: DetectionConfig) -> PreProblem:
    """The estimation problem for one pair of windows."""
    y_p = _window(y_p, config, "y_p")
    y_q = _window(y_q, config, "y_q")
    lp = GaussianLinearLikelihood(y_p, config.likelihood_sigma)
    lq = GaussianLinearLikelihood(y_q, config.likelihood_sigma)
    return PreProblem(lp, lq, config.prior_p, config.prior_q, config.feature)


def pre_score(y_p, y_q, config: DetectionConfig) -> float:
    """Detection score from the fitted posterior-ratio objective.

    Raises
    ------
    SolverFailureError
        If the fit does not converge.
    """
    problem = window_problem(y_p, y_q, config)
    res = fit(problem, tol=config.tol, max_iter=config.max_iter)
    if not res.converged:
        raise SolverFailureError(f"fit did not converge (gradient norm {res.grad_norm:.3g})")
    if config.score_mode == "kl":
        return objective(problem, np.zeros(problem.k)) - res.objective
    return res.objective


def prior_ratio_delta(config: DetectionConfig) -> np.ndarray:
    """Prior-ratio parameters from unit likelihoods, computed once per config."""
    if config.prior_delta is None:
        problem = PreProblem(UnitLikelihood(), UnitLikelihood(), config.prior_p, config.prior_q, config.feature)
        res = fit(problem, tol=config.tol, max_iter=config.max_iter)
        if not res.converged:
            raise SolverFailureError("prior-ratio fit did not converge")
        config.prior_delta = res.delta_hat
    return config.prior_delta


def plugin_score(y_p, y_q, config: DetectionConfig) -> float:
    """Score of the plugin ratio ``exp<delta_prior, f(x)> * l_p(x) / l_q(x)``.

    The ratio is plugged into the same objective as :func:`pre_score`, so with
    unit likelihoods both scores coincide.
    """
    delta = prior_ratio_delta(config)
    problem = window_problem(y_p, y_q, config)
    w = softmax_weights(problem.loglik_p)
    log_ratio_p = problem.Fp @ delta + problem.loglik_p - problem.log_lq.evaluate(problem.xp.samples)
    # log l_q + log ratio on the q side reduces to log l_p + <delta, f>
    z = problem.log_lp.evaluate(problem.xq.samples) + problem.Fq @ delta
    value = -float(w @ log_ratio_p) + float(logsumexp(z)) - math.log(problem.n_q)
    if config.score_mode == "kl":
        return objective(problem, np.zeros(problem.k)) - value
    return value


def sliding_scores(series, config: DetectionConfig, scorer=pre_score) -> DetectionSeries:
    """Score each pair of consecutive windows; the earlier window is the reference."""
    y = np.asarray(series, dtype=float).ravel()
    L = config.window_len
    if y.size < 2 * L:
        raise InvalidInputError(f"series of length {y.size} is shorter than two windows ({2 * L})")
    positions = np.arange(0, y.size - 2 * L + 1, config.stride)
    scores = np.full(positions.size, np.nan)
    for i, t in enumerate(positions):
        try:
            scores[i] = scorer(y[t : t + L], y[t + L : t + 2 * L], config)
        except PostRatioError:
            pass
    return DetectionSeries(positions, scores)


def fit_ar(y, order: int) -> np.ndarray:
    """AR coefficients by conditional least squares with an intercept."""
    y = np.asarray(y, dtype=float).ravel()
    if order < 1:
        raise InvalidInputError("order must be positive")
    rows = y.size - order
    if rows < order + 1:
        raise InvalidInputError(f"window of length {y.size} is too short for AR({order})")
    lags = np.column_stack([y[order - j : y.size - j] for j in range(1, order + 1)])
    X = np.column_stack([np.ones(rows), lags])
    coef, _, rank, _ = np.linalg.lstsq(X, y[order:], rcond=None)
    if rank < X.shape[1]:
        raise DegenerateInputError(f"AR({order}) regression is singular (rank {rank} of {X.shape[1]})")
    return coef[1:]


def autocorr_distance(y_p, y_q, order: int = 20) -> float:
    """Euclidean distance between AR(order) fits of two windows."""
    return float(np.linalg.norm(fit_ar(y_p, order) - fit_ar(y_q, order)))


def trajectory_matrix(y, window: int) -> np.ndarray:
    """Hankel matrix whose columns are the length-``window`` lagged segments."""
    y = np.asarray(y, dtype=float).ravel()
    if not 1 <= window <= y.size:
        raise InvalidInputError(f"window {window} does not fit a sequence of length {y.size}")
    return np.lib.stride_tricks.sliding_window_view(y, window).T.copy()


def _leading_subspace(y, window, rank):
    U, s, _ = np.linalg.svd(trajectory_matrix(y, window), full_matrices=False)
    if rank > s.size or s[0] == 0 or s[rank - 1] <= s[0] * 1e-12:
        raise DegenerateInputError(f"trajectory matrix has fewer than {rank} nonzero singular values")
    return U[:, :rank]


def sst_distance(y_p, y_q, window: int | None = None, rank: int = 20) -> float:
    """One minus the largest principal cosine between the leading subspaces.

    ``window`` defaults to half the length of ``y_p``.
    """
    if window is None:
        window = max(1, np.asarray(y_p).size // 2)
    if not 1 <= rank <= window:
        raise InvalidInputError(f"rank must lie in [1, window={window}]")
    Up = _leading_subspace(y_p, window, rank)
    Uq = _leading_subspace(y_q, window, rank)
    cos = np.linalg.svd(Up.T @ Uq, compute_uv=False)[0]
    return float(min(max(1.0 - cos, 0.0), 1.0))


def roc_auc(scores_pos, scores_neg) -> float:
    """Mann-Whitney AUC with ties counted as one half."""
    pos = np.asarray(scores_pos, dtype=float).ravel()
    neg = np.asarray(scores_neg, dtype=float).ravel()
    if pos.size == 0 or neg.size == 0:
        raise InvalidInputError("both score lists must be non-empty")
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


def roc_points(scores_pos, scores_neg) -> np.ndarray:
    """``(fpr, tpr)`` pairs, one per distinct threshold, from (0, 0) to (1, 1)."""
    pos = np.asarray(scores_pos, dtype=float).ravel()
    neg = np.asarray(scores_neg, dtype=float).ravel()
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pts = [(0.0, 0.0)]
    for t in thresholds:
        pts.append((float(np.mean(neg >= t)), float(np.mean(pos >= t))))
    return np.array(pts)
