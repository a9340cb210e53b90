"""Log-likelihood functions log l(x) = log p(y | x) for a fixed observation y."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBlackboxError, InvalidInputError

PROB_CLAMP = 1e-12


class LogLikelihood:
    """Common interface: ``fn(x)`` for one vector, ``fn.evaluate(X)`` row-wise."""

    def evaluate(self, X) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise InvalidInputError(f"expected a vector, got shape {x.shape}")
        return float(self.evaluate(x[None, :])[0])


@dataclass(frozen=True)
class UnitLikelihood(LogLikelihood):
    """l(x) = 1, i.e. no observation. Reduces the estimator to prior-ratio fitting."""

    def evaluate(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise InvalidInputError(f"expected a matrix, got shape {X.shape}")
        return np.zeros(X.shape[0])


@dataclass(frozen=True, eq=False)
class GaussianLinearLikelihood(LogLikelihood):
    """Isotropic normal observation model ``y ~ N(A x, sigma^2 I_m)``.

    ``design=None`` means A is the identity (so m = d).
    """

    y: np.ndarray
    sigma: float
    design: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("observation y contains non-finite values")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.design is not None:
            A = np.array(self.design, dtype=float, ndmin=2)
            if A.shape[0] != y.size:
                raise InvalidInputError(f"design has {A.shape[0]} rows but y has {y.size} entries")
            A.setflags(write=False)
            object.__setattr__(self, "design", A)

    @classmethod
    def replicated(cls, y, d: int, copies: int, sigma: float) -> GaussianLinearLikelihood:
        """Block design where each latent coordinate is observed ``copies`` times."""
        design = np.kron(np.eye(d), np.ones((copies, 1)))
        return cls(y, sigma, design)

    @property
    def obs_dim(self) -> int:
        return self.y.size

    @property
    def input_dim(self) -> int:
        return self.y.size if self.design is None else self.design.shape[1]

    def evaluate(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise InvalidInputError(
                f"gaussian likelihood expects rows of length {self.input_dim}, got shape {X.shape}"
            )
        mean = X if self.design is None else X @ self.design.T
        resid = self.y[None, :] - mean
        m = self.y.size
        const = -0.5 * m * math.log(2.0 * math.pi * self.sigma**2)
        return const - np.einsum("ij,ij->i", resid, resid) / (2.0 * self.sigma**2)


@dataclass(frozen=True, eq=False)
class BlackboxLikelihood(LogLikelihood):
    """log of a class probability emitted by an opaque classifier.

    ``callback`` maps one vector to a probability; with ``batched=True`` it maps
    an ``(n, d)`` matrix to ``n`` probabilities.  Values are clamped to
    ``[clamp, 1 - clamp]`` before the log.
    """

    callback: Callable
    batched: bool = False
    clamp: float = field(default=PROB_CLAMP)

    def probabilities(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise InvalidInputError(f"expected a matrix, got shape {X.shape}")
        if self.batched:
            probs = np.asarray(self.callback(X), dtype=float).ravel()
        else:
            probs = np.array([float(self.callback(row)) for row in X])
        if probs.shape != (X.shape[0],):
            raise InvalidBlackboxError(f"black box returned {probs.size} values for {X.shape[0]} rows")
        bad = ~((probs >= 0.0) & (probs <= 1.0))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InvalidBlackboxError(f"black box returned {probs[i]!r} for row {i}; expected a probability")
        return probs

    def evaluate(self, X) -> np.ndarray:
        probs = np.clip(self.probabilities(X), self.clamp, 1.0 - self.clamp)
        return np.log(probs)

    def complement(self) -> BlackboxLikelihood:
        """The likelihood of the other class, 1 - p."""
        cb = self.callback
        return BlackboxLikelihood(lambda x: 1.0 - np.asarray(cb(x), dtype=float), self.batched, self.clamp)


def parse_likelihood(spec: str, input_dim: int, read_vector=None) -> LogLikelihood:
    """Build a likelihood from ``unit`` or ``gaussian:y=<path>,sigma=<v>[,replicate=<g>]``.

    ``read_vector`` loads the observation file; it is injected so this module
    stays free of file handling.
    """
    text = spec.strip()
    if text.lower() == "unit":
        return UnitLikelihood()
    head, sep, body = text.partition(":")
    if head.lower() != "gaussian" or not sep:
        raise InvalidInputError(f"unknown likelihood spec {spec!r}")
    opts = {}
    for item in body.split(","):
        key, eq, value = item.partition("=")
        if not eq:
            raise InvalidInputError(f"likelihood spec {spec!r}: malformed option {item!r}")
        opts[key.strip().lower()] = value.strip()
    if "y" not in opts or "sigma" not in opts:
        raise InvalidInputError(f"likelihood spec {spec!r}: needs y=<path> and sigma=<v>")
    unknown = set(opts) - {"y", "sigma", "replicate"}
    if unknown:
        raise InvalidInputError(f"likelihood spec {spec!r}: unknown options {sorted(unknown)}")
    try:
        sigma = float(opts["sigma"])
        copies = int(opts.get("replicate", "1"))
    except ValueError as exc:
        raise InvalidInputError(f"likelihood spec {spec!r}: {exc}") from None
    if read_vector is None:
        raise InvalidInputError("no reader supplied for the observation file")
    y = read_vector(opts["y"])
    if copies < 1:
        raise InvalidInputError("replicate must be >= 1")
    if "replicate" in opts:
        if y.size != input_dim * copies:
            raise InvalidInputError(
                f"observation has {y.size} entries, replicate={copies} with d={input_dim} needs {input_dim * copies}"
            )
        return GaussianLinearLikelihood.replicated(y, input_dim, copies, sigma)
    if y.size != input_dim:
        raise InvalidInputError(f"observation has {y.size} entries but samples have dimension {input_dim}")
    return GaussianLinearLikelihood(y, sigma)
