"""Feature maps f: R^d -> R^k used by the log-linear ratio model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError

KINDS = ("identity", "poly2", "autocorr", "lag1")


@dataclass(frozen=True)
class FeatureMap:
    """A fixed statistic applied to every latent sample.

    Parameters
    ----------
    kind : {"identity", "poly2", "autocorr", "lag1"}
        ``identity`` returns x, ``poly2`` returns ``[x, x**2]``,
        ``autocorr`` returns biased sample autocorrelations at lags
        ``1..max_lag`` and ``lag1`` returns ``[x1*x2, ..., x_{d-1}*x_d]``.
    input_dim : int
        Dimension d of the latent variable.
    max_lag : int, optional
        Only used by ``autocorr``.
    """

    kind: str
    input_dim: int
    max_lag: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown feature kind {self.kind!r}; expected one of {KINDS}")
        if self.input_dim < 1:
            raise InvalidInputError("input_dim must be positive")
        if self.kind == "autocorr":
            if self.max_lag < 1:
                raise InvalidInputError("autocorr needs max_lag >= 1")
            if self.max_lag > self.input_dim - 1:
                raise InvalidInputError(
                    f"autocorr max_lag={self.max_lag} needs input_dim > max_lag, got {self.input_dim}"
                )
        if self.kind == "lag1" and self.input_dim < 2:
            raise InvalidInputError("lag1 features need input_dim >= 2")

    @classmethod
    def identity(cls, d: int) -> FeatureMap:
        return cls("identity", d)

    @classmethod
    def poly2(cls, d: int) -> FeatureMap:
        return cls("poly2", d)

    @classmethod
    def autocorr(cls, d: int, max_lag: int) -> FeatureMap:
        return cls("autocorr", d, max_lag)

    @classmethod
    def lag1(cls, d: int) -> FeatureMap:
        return cls("lag1", d)

    @classmethod
    def parse(cls, spec: str, d: int) -> FeatureMap:
        """Build a map from ``identity | poly2 | autocorr:<L> | lag1``."""
        text = spec.strip().lower()
        if text.startswith("autocorr"):
            _, sep, lag = text.partition(":")
            if not sep or not lag.strip().isdigit():
                raise InvalidInputError(f"feature spec {spec!r}: expected autocorr:<L>")
            return cls.autocorr(d, int(lag))
        if text in ("identity", "poly2", "lag1"):
            return cls(text, d)
        raise InvalidInputError(f"unknown feature spec {spec!r}")

    @property
    def output_dim(self) -> int:
        if self.kind == "identity":
            return self.input_dim
        if self.kind == "poly2":
            return 2 * self.input_dim
        if self.kind == "autocorr":
            return self.max_lag
        return self.input_dim - 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise InvalidInputError(f"expected a vector, got shape {x.shape}")
        return self.transform(x[None, :])[0]

    def transform(self, X) -> np.ndarray:
        """Evaluate the map row-wise on an ``(n, d)`` matrix."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise InvalidInputError(
                f"{self.kind} feature expects rows of length {self.input_dim}, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("feature input contains non-finite values")
        if self.kind == "identity":
            return X.copy()
        if self.kind == "poly2":
            return np.hstack([X, X * X])
        if self.kind == "lag1":
            return X[:, :-1] * X[:, 1:]
        return _autocorr_rows(X, self.max_lag)


def _autocorr_rows(X: np.ndarray, max_lag: int) -> np.ndarray:
    # biased estimator: every lag sum is divided by d, then by the lag-0 term
    Xc = X - X.mean(axis=1, keepdims=True)
    c0 = np.einsum("ij,ij->i", Xc, Xc)
    scale = np.abs(X).max(axis=1)
    flat = c0 <= (1e-14 * np.maximum(scale, 1e-300)) ** 2 * X.shape[1]
    if np.any(flat):
        row = int(np.flatnonzero(flat)[0])
        raise DegenerateInputError(f"autocorrelation of a constant sequence (row {row}) is undefined")
    out = np.empty((X.shape[0], max_lag))
    for lag in range(1, max_lag + 1):
        out[:, lag - 1] = np.einsum("ij,ij->i", Xc[:, :-lag], Xc[:, lag:]) / c0
    return out
