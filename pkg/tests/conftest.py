from __future__ import annotations

import numpy as np
import pytest

from postratio.features import FeatureMap
from postratio.likelihood import GaussianLinearLikelihood, UnitLikelihood
from postratio.problem import PreProblem


def random_problem(seed: int, n_p: int = 60, n_q: int = 70, d: int = 2, kind: str = "identity", gaussian=True):
    """A small problem with Gaussian likelihoods and shifted priors."""
    rng = np.random.default_rng(seed)
    xp = rng.standard_normal((n_p, d)) + 0.3
    xq = 1.2 * rng.standard_normal((n_q, d))
    feature = FeatureMap.identity(d) if kind == "identity" else FeatureMap.poly2(d)
    if gaussian:
        lp = GaussianLinearLikelihood(rng.normal(0.2, 0.5, d), 1.3)
        lq = GaussianLinearLikelihood(rng.normal(-0.2, 0.5, d), 0.9)
    else:
        lp = lq = UnitLikelihood()
    return PreProblem(lp, lq, xp, xq, feature)


@pytest.fixture
def small_problem():
    return random_problem(0)


@pytest.fixture
def unit_problem():
    return random_problem(1, gaussian=False)
