"""Prior sample sets, the immutable problem bundle and the normalized weights.

All likelihood arithmetic stays in the log domain: the p-side weights are a
softmax of ``log l_p`` and the q-side weights a softmax of
``log l_q + <delta, f>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateEvidenceError, InvalidInputError
from .features import FeatureMap
from .likelihood import LogLikelihood

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PriorSampleSet:
    """``n x d`` matrix of draws from a prior; rows are samples."""

    samples: np.ndarray

    def __post_init__(self):
        X = np.array(self.samples, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError(f"prior samples must be a non-empty (n, d) matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("prior samples contain non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "samples", X)

    @classmethod
    def from_csv(cls, path) -> PriorSampleSet:
        from .io import read_matrix

        return cls(read_matrix(path))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Nonnegative weights summing to one (checked on construction)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise InvalidInputError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInputError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)


def softmax_weights(logits) -> np.ndarray:
    """Max-subtracted softmax; raises if every logit is -inf."""
    z = np.asarray(logits, dtype=float)
    top = np.max(z)
    if not np.isfinite(top):
        if top == -np.inf:
            raise DegenerateEvidenceError("all likelihoods are zero; the estimated evidence vanishes")
        raise InvalidInputError("logits contain +inf or NaN")
    e = np.exp(z - top)
    w = e / e.sum()
    # one renormalization pass pulls the sum inside 1e-12 for long vectors
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class PreProblem:
    """Two log-likelihoods, two prior sample sets and a feature map.

    The feature matrices ``Fp`` (``n_p x k``) and ``Fq`` (``n_q x k``) and the
    log-likelihood vectors at the prior samples are computed once here and are
    read-only afterwards.
    """

    log_lp: LogLikelihood
    log_lq: LogLikelihood
    xp: PriorSampleSet
    xq: PriorSampleSet
    feature: FeatureMap
    ridge: float = 0.0
    Fp: np.ndarray = field(init=False, repr=False)
    Fq: np.ndarray = field(init=False, repr=False)
    loglik_p: np.ndarray = field(init=False, repr=False)
    loglik_q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xp, xq = self.xp, self.xq
        if not isinstance(xp, PriorSampleSet):
            xp = PriorSampleSet(xp)
            object.__setattr__(self, "xp", xp)
        if not isinstance(xq, PriorSampleSet):
            xq = PriorSampleSet(xq)
            object.__setattr__(self, "xq", xq)
        d = self.feature.input_dim
        if xp.dim != d or xq.dim != d:
            raise InvalidInputError(
                f"sample dimensions (p: {xp.dim}, q: {xq.dim}) do not match feature input_dim {d}"
            )
        if not (np.isfinite(self.ridge) and self.ridge >= 0):
            raise InvalidInputError("ridge must be a nonnegative number")
        cached = {
            "Fp": self.feature.transform(xp.samples),
            "Fq": self.feature.transform(xq.samples),
            "loglik_p": np.asarray(self.log_lp.evaluate(xp.samples), dtype=float),
            "loglik_q": np.asarray(self.log_lq.evaluate(xq.samples), dtype=float),
        }
        for name, arr in cached.items():
            if np.any(np.isnan(arr)) or np.any(arr == np.inf):
                raise InvalidInputError(f"{name} contains NaN or +inf")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_p(self) -> int:
        return self.xp.n

    @property
    def n_q(self) -> int:
        return self.xq.n

    @property
    def k(self) -> int:
        return self.feature.output_dim

    def with_ridge(self, ridge: float) -> PreProblem:
        return PreProblem(self.log_lp, self.log_lq, self.xp, self.xq, self.feature, ridge)


def p_side_weights(problem: PreProblem) -> tuple[WeightVector, float]:
    """Normalized likelihood weights on the p-prior samples.

    Returns
    -------
    weights : WeightVector
        ``w_i = l_p(x_i) / sum_j l_p(x_j)``.
    log_evidence : float
        ``log p_hat(y_p) = logsumexp(log l_p) - log n_p``.
    """
    w = softmax_weights(problem.loglik_p)
    log_evidence = float(logsumexp(problem.loglik_p)) - math.log(problem.n_p)
    return WeightVector(w), log_evidence


def q_side_weights(problem: PreProblem, delta) -> WeightVector:
    """Ratio-reweighted q-side weights ``softmax(log l_q + Fq @ delta)``."""
    delta = _check_delta(problem, delta)
    return WeightVector(softmax_weights(problem.loglik_q + problem.Fq @ delta))


def _check_delta(problem: PreProblem, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size != problem.k:
        raise InvalidInputError(f"delta has {delta.size} entries, the feature map has {problem.k}")
    if not np.all(np.isfinite(delta)):
        raise InvalidInputError("delta contains non-finite values")
    return delta
