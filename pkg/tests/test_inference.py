from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy import stats
from test_estimator import _toy

from postratio.errors import InvalidInputError, SingularInformationError
from postratio.estimator import fit, hessian
from postratio.features import FeatureMap
from postratio.inference import (
    Z95,
    asymptotic_report,
    chi2_quantile,
    consistency_diagnostics,
    ellipse_coverage,
)
from postratio.likelihood import GaussianLinearLikelihood, UnitLikelihood
from postratio.problem import PreProblem


class TestAsymptoticReport:
    def test_symmetric_unit(self):
        X = np.random.default_rng(0).standard_normal((80, 2))
        p = PreProblem(UnitLikelihood(), UnitLikelihood(), X, X, FeatureMap.identity(2))
        rep = asymptotic_report(p, fit(p))
        np.testing.assert_allclose(rep.sigma_p, rep.sigma, atol=1e-12)
        np.testing.assert_allclose(rep.sigma_q, rep.sigma, atol=1e-12)
        np.testing.assert_allclose(rep.avar, 2 * np.linalg.inv(rep.sigma), rtol=1e-10)

    def test_high_precision_toy(self):
        # frozen from a 50-digit mpmath computation of the weighted variances
        rep = asymptotic_report(_toy(), fit(_toy(), tol=1e-12))
        assert rep.delta_hat[0] == pytest.approx(0.8221463623175293952, abs=1e-10)
        assert rep.sigma[0, 0] == pytest.approx(0.35790185591126127294, rel=1e-9)
        assert rep.sigma_p[0, 0] == pytest.approx(0.23390589629850641921, rel=1e-12)
        assert rep.sigma_q[0, 0] == pytest.approx(0.41007041063735610301, rel=1e-9)
        assert rep.avar[0, 0] == pytest.approx(5.0273831855817240358, rel=1e-9)
        assert rep.cov_delta[0, 0] == pytest.approx(5.0273831855817240358 / 3, rel=1e-9)

    def test_invariants(self, small_problem):
        res = fit(small_problem)
        rep = asymptotic_report(small_problem, res)
        for M in (rep.sigma, rep.sigma_p, rep.sigma_q, rep.avar):
            np.testing.assert_allclose(M, M.T, atol=1e-10)
            assert np.linalg.eigvalsh(M).min() >= -1e-10
        np.testing.assert_allclose(rep.sigma, hessian(small_problem, res.delta_hat), atol=1e-14)
        assert np.all(rep.marginal_ci95[:, 0] <= rep.delta_hat)
        assert np.all(rep.marginal_ci95[:, 1] >= rep.delta_hat)
        half = rep.marginal_ci95[:, 1] - rep.delta_hat
        np.testing.assert_allclose(half, Z95 * np.sqrt(np.diag(rep.cov_delta)), rtol=1e-12)

    def test_reorder_invariance(self, small_problem):
        p = small_problem
        perm_p = np.random.default_rng(0).permutation(p.n_p)
        perm_q = np.random.default_rng(1).permutation(p.n_q)
        q = PreProblem(p.log_lp, p.log_lq, p.xp.samples[perm_p], p.xq.samples[perm_q], p.feature)
        a = asymptotic_report(p, fit(p)).avar
        b = asymptotic_report(q, fit(q)).avar
        np.testing.assert_allclose(a, b, rtol=1e-8)

    def test_needs_converged(self, small_problem):
        with pytest.raises(InvalidInputError):
            asymptotic_report(small_problem, fit(small_problem, init=[4.0, 4.0], max_iter=1))

    def test_singular(self):
        x = np.random.default_rng(0).standard_normal((30, 1))
        X = np.hstack([x, x])
        p = PreProblem(UnitLikelihood(), UnitLikelihood(), X, X, FeatureMap.identity(2))
        with pytest.raises(SingularInformationError, match="ridge"):
            asymptotic_report(p, fit(p))


class TestEllipseCoverage:
    def test_all_at_center(self):
        assert ellipse_coverage(np.zeros((5, 2)), np.zeros(2), np.eye(2)) == 0.0

    def test_hand_1d(self):
        assert ellipse_coverage([[0.0], [3.0]], [0.0], [[1.0]], 0.95) == 0.5

    def test_monte_carlo(self):
        rng = np.random.default_rng(0)
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        Z = rng.multivariate_normal([1.0, -1.0], cov, size=20000)
        frac = ellipse_coverage(Z, [1.0, -1.0], cov, 0.9)
        assert abs(frac - 0.1) <= 3 * np.sqrt(0.1 * 0.9 / 20000)

    def test_singular_cov(self):
        with pytest.raises(SingularInformationError):
            ellipse_coverage(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)))

    def test_bad_level(self):
        with pytest.raises(InvalidInputError):
            ellipse_coverage(np.zeros((2, 1)), [0.0], [[1.0]], 1.0)

    def test_chi2_quantile(self):
        for k in (1, 2, 5):
            assert chi2_quantile(0.95, k) == pytest.approx(stats.chi2.ppf(0.95, k), rel=1e-12)
        assert chi2_quantile(0.95, 2) == pytest.approx(-2 * np.log(0.05), rel=1e-14)


def _isotropic_problem(n, seed):
    rng = np.random.default_rng(seed)
    like = GaussianLinearLikelihood(np.zeros(2), 1.0)
    return PreProblem(like, like, rng.standard_normal((n, 2)), rng.standard_normal((n, 2)), FeatureMap.identity(2))


class TestConsistencyDiagnostics:
    def test_tiny_radius(self, small_problem):
        diag = consistency_diagnostics(small_problem, [0.1, 0.1], 1e-9)
        assert diag.min_eig_over_ball == pytest.approx(diag.min_eig_ref, abs=1e-8)
        lam = np.linalg.eigvalsh(hessian(small_problem, [0.1, 0.1]))[0]
        assert diag.min_eig_ref == pytest.approx(lam, abs=1e-14)

    def test_weyl_below(self, small_problem):
        for r in (0.1, 1.0, 5.0):
            diag = consistency_diagnostics(small_problem, np.zeros(2), r)
            assert diag.weyl_lower_bound <= diag.min_eig_over_ball + 1e-8
            assert np.linalg.norm(diag.argmin_delta) <= r * (1 + 1e-12)

    def test_nested_radii(self, small_problem):
        vals = [consistency_diagnostics(small_problem, np.zeros(2), r).min_eig_over_ball for r in (0.5, 1.0, 2.0, 4.0)]
        assert all(b <= a + 1e-10 for a, b in itertools.pairwise(vals))

    def test_ratio_stat_definition(self, small_problem):
        diag = consistency_diagnostics(small_problem, np.zeros(2), 1.0)
        want = np.sqrt(min(small_problem.n_p, small_problem.n_q)) * diag.grad_norm_at_ref / diag.min_eig_over_ball
        assert diag.ratio_stat == pytest.approx(want, rel=1e-14)

    def test_search_beats_random_probes(self):
        p = _isotropic_problem(200, 0)
        diag = consistency_diagnostics(p, np.zeros(2), 10 / np.sqrt(200))
        rng = np.random.default_rng(9)
        for _ in range(200):
            u = rng.standard_normal(2)
            d = u / np.linalg.norm(u) * 10 / np.sqrt(200) * np.sqrt(rng.uniform())
            assert diag.min_eig_over_ball <= np.linalg.eigvalsh(hessian(p, d))[0] + 1e-9

    def test_curvature_floor_at_n400(self):
        vals = [consistency_diagnostics(_isotropic_problem(400, s), np.zeros(2), 0.5).min_eig_over_ball for s in range(5)]
        assert min(vals) >= 0.18

    def test_bad_radius(self, small_problem):
        with pytest.raises(InvalidInputError):
            consistency_diagnostics(small_problem, np.zeros(2), 0.0)
