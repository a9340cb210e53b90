"""Property-based invariants.  ``CASES`` counts executed examples per property."""

from __future__ import annotations

from collections import Counter

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from postratio.detection import roc_auc
from postratio.estimator import hessian, objective
from postratio.features import FeatureMap
from postratio.inference import consistency_diagnostics
from postratio.likelihood import GaussianLinearLikelihood
from postratio.problem import PreProblem, softmax_weights
from postratio.simulation import ExperimentSpec, parallel_map, run_experiment, stream

CASES = Counter()

def profile(n):
    return settings(max_examples=n, derandomize=True, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-30, 30, allow_nan=False, allow_infinity=False)


def _problem(seed, n_p, n_q, k):
    rng = np.random.default_rng(seed)
    xp = rng.standard_normal((n_p, k))
    xq = rng.standard_normal((n_q, k)) * rng.uniform(0.5, 2.0)
    lp = GaussianLinearLikelihood(rng.standard_normal(k), rng.uniform(0.5, 2.0))
    lq = GaussianLinearLikelihood(rng.standard_normal(k), rng.uniform(0.5, 2.0))
    return PreProblem(lp, lq, xp, xq, FeatureMap.identity(k))


problems = st.builds(
    _problem,
    st.integers(0, 2**32 - 1),
    st.integers(1, 40),
    st.integers(1, 40),
    st.integers(1, 3),
)


@profile(300)
@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-700, 700)))
def test_weights_on_simplex(logw):
    CASES["simplex"] += 1
    w = softmax_weights(logw)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1) <= 1e-12
    # shifting every log weight leaves the weights unchanged
    np.testing.assert_allclose(softmax_weights(logw + 123.0), w, atol=1e-12)


@profile(200)
@given(problems, st.data())
def test_convexity_probe(problem, data):
    CASES["convexity"] += 1
    k = problem.k
    vec = arrays(np.float64, k, elements=st.floats(-3, 3))
    a, b = data.draw(vec), data.draw(vec)
    t = data.draw(st.floats(0, 1))
    fa, fb = objective(problem, a), objective(problem, b)
    mid = objective(problem, t * a + (1 - t) * b)
    assert mid <= t * fa + (1 - t) * fb + 1e-9 * (1 + abs(fa) + abs(fb))
    assert np.linalg.eigvalsh(hessian(problem, a)).min() >= -1e-9


@profile(150)
@given(problems, st.floats(0.01, 3.0))
def test_weyl_direction(problem, radius):
    CASES["weyl"] += 1
    diag = consistency_diagnostics(problem, np.zeros(problem.k), radius, n_restarts=2, max_iter=30)
    assert diag.weyl_lower_bound <= diag.min_eig_over_ball + 1e-8
    assert diag.min_eig_over_ball <= diag.min_eig_ref + 1e-10


@profile(300)
@given(st.lists(finite, min_size=1, max_size=30), st.lists(finite, min_size=1, max_size=30))
def test_roc_complement(a, b):
    CASES["roc"] += 1
    assert abs(roc_auc(a, b) + roc_auc(b, a) - 1) <= 1e-12
    assert 0 <= roc_auc(a, b) <= 1


@profile(100)
@given(st.integers(0, 2**64 - 1), st.integers(1, 40), st.integers(2, 6))
def test_stream_determinism_across_threads(seed, n, threads):
    CASES["threads"] += 1

    def draw(r):
        return stream(seed, r, "prop").standard_normal(3).tobytes()

    assert parallel_map(draw, range(n), threads) == parallel_map(draw, range(n), 1)


@profile(15)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_experiment_determinism_across_threads(seed, threads):
    CASES["experiment"] += 1
    kw = {"seed": seed, "replications": 4, "params": {"n_prior": 60}}
    one = run_experiment(ExperimentSpec("normality", threads=1, **kw))
    many = run_experiment(ExperimentSpec("normality", threads=threads, **kw))
    assert one.tables == many.tables and one.summary == many.summary
