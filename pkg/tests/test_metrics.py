import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpsb import metrics as m
from mpsb.core import CountMatrix
from mpsb.distributions import DmnbParams, bivariate_correlation, dmnb_sample
from mpsb.errors import DomainError, UndefinedMetricError


class TestMedianApe:
    def test_perfect_fit(self):
        y = np.array([[1, 2, 3], [4, 5, 6]])
        assert m.median_ape(y, y.astype(float)) == 0.0

    def test_single_cell(self):
        np.testing.assert_allclose(m.median_ape([[10]], [[12.0]]), 0.2, rtol=1e-14)

    def test_zero_counts_excluded(self):
        terms, n0 = m.ape_terms(CountMatrix(np.array([[0, 4, 0, 2]])), [[1.0, 5.0, 3.0, 2.0]])
        np.testing.assert_allclose(terms, [0.25, 0.0])
        assert n0 == 2

    def test_all_zero(self):
        with pytest.raises(UndefinedMetricError):
            m.median_ape(np.zeros((2, 3)), np.ones((2, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            m.median_ape(np.ones((2, 3)), np.ones((3, 2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 8), st.integers(0, 10_000))
    def test_permutation_invariant(self, J, T, seed):
        rng = np.random.default_rng(seed)
        y = rng.poisson(3.0, (J, T))
        f = rng.uniform(0.5, 6.0, (J, T))
        if not np.any(y > 0):
            return
        pr, pc = rng.permutation(J), rng.permutation(T)
        assert m.median_ape(y, f) == m.median_ape(y[pr][:, pc], f[pr][:, pc])


class TestCoverage:
    def test_degenerate_at_truth(self):
        t = np.array([1.0, 2.0, 3.0])
        assert m.coverage(np.stack([t, t], axis=-1), t) == 1.0

    def test_disjoint(self):
        t = np.array([1.0, 2.0])
        assert m.coverage(np.array([[2.0, 3.0], [5.0, 6.0]]), t) == 0.0

    def test_partial(self):
        assert m.coverage(np.array([[0.0, 1.0], [0.0, 1.0]]), np.array([0.5, 1.5])) == 0.5

    def test_errors(self):
        with pytest.raises(DomainError):
            m.coverage(np.ones((3, 2)), np.ones(2))
        with pytest.raises(DomainError):
            m.coverage(np.array([[2.0, 1.0]]), np.array([1.5]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 2.0))
    def test_monotone_in_widening(self, seed, widen):
        rng = np.random.default_rng(seed)
        t = rng.normal(size=30)
        lo = rng.normal(size=30) - 0.5
        hi = lo + rng.uniform(0, 1.5, 30)
        c0 = m.coverage(np.stack([lo, hi], -1), t)
        c1 = m.coverage(np.stack([lo - widen, hi + widen], -1), t)
        assert 0.0 <= c0 <= c1 <= 1.0


class TestPacf:
    def test_alternating(self):
        x = np.array([1.0, -1.0] * 50)
        np.testing.assert_allclose(m.pacf_lag1(x), -1.0, atol=2 / x.size)

    def test_white_noise(self):
        x = np.random.default_rng(0).normal(size=10_000)
        assert abs(m.pacf_lag1(x)) < 0.03

    def test_ar1(self):
        rng = np.random.default_rng(1)
        x = np.zeros(20_000)
        for t in range(1, x.size):
            x[t] = 0.8 * x[t - 1] + rng.normal()
        np.testing.assert_allclose(m.pacf_lag1(x), 0.8, atol=0.02)

    def test_errors(self):
        with pytest.raises(UndefinedMetricError):
            m.pacf_lag1([2.0, 2.0, 2.0])
        with pytest.raises(UndefinedMetricError):
            m.pacf_lag1([1.0, 2.0])


class TestPairwiseCorrelation:
    def test_duplicated_row(self):
        y = np.array([[1, 3, 2, 5], [1, 3, 2, 5]])
        np.testing.assert_allclose(m.pairwise_correlation(y), np.ones((2, 2)), rtol=1e-14)

    def test_independent_rows(self):
        y = np.random.default_rng(2).poisson(4.0, (2, 10_000))
        assert abs(m.pairwise_correlation(y)[0, 1]) < 0.03

    def test_zero_variance_flagged(self):
        r = m.pairwise_correlation(np.array([[1, 2, 3], [4, 4, 4], [3, 1, 2]]))
        assert np.all(np.isnan(r[1])) and np.all(np.isnan(r[:, 1]))
        assert r[0, 0] == 1.0 and np.isfinite(r[0, 2])

    def test_short_series(self):
        with pytest.raises(UndefinedMetricError):
            m.pairwise_correlation(np.ones((2, 2)))

    def test_symmetric_unit_diagonal(self):
        y = np.random.default_rng(3).poisson(2.0, (4, 30))
        r = m.pairwise_correlation(y)
        np.testing.assert_array_equal(r, r.T)
        np.testing.assert_array_equal(np.diag(r), 1.0)

    @pytest.mark.parametrize("li,lj,gamma,alpha,beta", [(1.0, 2.0, 0.5, 10.0, 4.0), (3.0, 0.5, 0.2, 30.0, 1.0)])
    def test_sign_agrees_with_theory(self, li, lj, gamma, alpha, beta):
        y = dmnb_sample(DmnbParams(gamma * alpha, [li, lj], gamma * beta), np.random.default_rng(4), 20_000)
        emp = m.pairwise_correlation(y.T)[0, 1]
        assert np.sign(emp) == np.sign(bivariate_correlation(li, lj, gamma, beta)) == 1.0


class TestEvalReport:
    def test_evaluate_and_round_trip(self):
        y = np.array([[1, 4, 2, 0], [3, 3, 5, 2]])
        f = y + 0.5
        iv = np.stack([f - 1, f + 1], axis=-1)
        rep = m.evaluate(CountMatrix(y), f, iv, theta_mean=[1.0, 1.2, 0.9, 1.1],
                         lambda_intervals=[[1.0, 3.0], [2.0, 2.5]], true_lambdas=[2.0, 3.0])
        assert rep.ape_excluded == 1 and rep.coverage_by_series == [1.0, 1.0]
        assert rep.lambda_coverage == [1.0, 0.0]
        back = m.EvalReport.from_dict(rep.to_dict())
        assert back.median_ape == rep.median_ape and back.pacf_lag1 == rep.pacf_lag1

    def test_nan_correlations_serialise_as_null(self):
        rep = m.evaluate(CountMatrix(np.array([[1, 2, 3], [2, 2, 2]])), np.ones((2, 3)))
        d = rep.to_dict()
        assert d["pairwise_correlations"][1] == [None, None]
        assert np.isnan(m.EvalReport.from_dict(d).pairwise_correlations[1][1])

    def test_validation(self):
        with pytest.raises(DomainError):
            m.EvalReport(-1.0, 0, [], [[1.0]])
        with pytest.raises(DomainError):
            m.EvalReport(0.1, 0, [1.5], [[1.0]])
        with pytest.raises(DomainError):
            m.EvalReport(0.1, 0, [], [[1.0, 0.2], [0.3, 1.0]])
