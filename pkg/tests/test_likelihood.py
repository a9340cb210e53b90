from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from postratio.errors import InvalidBlackboxError, InvalidInputError
from postratio.likelihood import (
    PROB_CLAMP,
    BlackboxLikelihood,
    GaussianLinearLikelihood,
    UnitLikelihood,
    parse_likelihood,
)


class TestUnit:
    def test_zero(self):
        assert UnitLikelihood()(np.array([3.0, -1.0])) == 0.0
        np.testing.assert_array_equal(UnitLikelihood().evaluate(np.ones((4, 2))), np.zeros(4))


class TestGaussian:
    def test_zero_residual(self):
        A = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, -1.0]])
        x = np.array([0.5, -0.25])
        fn = GaussianLinearLikelihood(A @ x, 2.0, A)
        assert fn(x) == pytest.approx(-1.5 * math.log(2 * math.pi * 4.0), abs=1e-14)

    def test_standard_normal_value(self):
        # -0.5 log(2 pi) - 0.5
        assert GaussianLinearLikelihood([1.0], 1.0)(np.array([0.0])) == pytest.approx(-1.4189385332046727, abs=1e-15)

    def test_matches_scipy(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal(6)
        X = rng.standard_normal((5, 6))
        got = GaussianLinearLikelihood(y, 0.7).evaluate(X)
        want = [stats.multivariate_normal(x, 0.49 * np.eye(6)).logpdf(y) for x in X]
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_replicated_design(self):
        y = np.r_[np.full(3, 1.0), np.full(3, -2.0)]
        fn = GaussianLinearLikelihood.replicated(y, 2, 3, 1.0)
        assert fn.input_dim == 2 and fn.obs_dim == 6
        assert fn(np.array([1.0, -2.0])) == pytest.approx(-3 * math.log(2 * math.pi))

    def test_finite_far_away(self):
        assert np.isfinite(GaussianLinearLikelihood([0.0], 1e-3)(np.array([1e6])))

    @pytest.mark.parametrize("sigma", [0.0, -1.0, np.inf])
    def test_bad_sigma(self, sigma):
        with pytest.raises(InvalidInputError):
            GaussianLinearLikelihood([0.0], sigma)

    def test_wrong_dimension(self):
        with pytest.raises(InvalidInputError):
            GaussianLinearLikelihood([0.0, 1.0], 1.0)(np.array([1.0]))


class TestBlackbox:
    def test_clamped(self):
        fn = BlackboxLikelihood(lambda x: 0.0)
        assert fn(np.array([1.0])) == pytest.approx(math.log(PROB_CLAMP))
        assert fn.complement()(np.array([1.0])) == pytest.approx(math.log1p(-PROB_CLAMP))

    def test_batched(self):
        fn = BlackboxLikelihood(lambda X: X[:, 0], batched=True)
        np.testing.assert_allclose(fn.evaluate(np.array([[0.25], [0.5]])), np.log([0.25, 0.5]))

    @pytest.mark.parametrize("value", [np.nan, 1.5, -0.1])
    def test_invalid_output(self, value):
        with pytest.raises(InvalidBlackboxError):
            BlackboxLikelihood(lambda x: value)(np.array([0.0]))

    def test_wrong_count(self):
        with pytest.raises(InvalidBlackboxError):
            BlackboxLikelihood(lambda X: np.ones(3) * 0.5, batched=True).evaluate(np.zeros((2, 1)))


class TestParse:
    def test_unit(self):
        assert isinstance(parse_likelihood("unit", 2), UnitLikelihood)

    def test_gaussian(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("y\n1\n2\n")
        from postratio.io import read_vector

        fn = parse_likelihood(f"gaussian:y={path},sigma=2", 2, read_vector)
        assert fn.sigma == 2.0 and fn.design is None
        rep = parse_likelihood(f"gaussian:y={path},sigma=2,replicate=2", 1, read_vector)
        assert rep.design.shape == (2, 1)

    @pytest.mark.parametrize("spec", ["gauss:y=a", "gaussian:y=a", "gaussian:sigma=1", "gaussian:y=a,sigma=1,foo=2"])
    def test_bad(self, spec):
        with pytest.raises(InvalidInputError):
            parse_likelihood(spec, 1, lambda p: np.zeros(1))
