import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sc

from mpsb.errors import ConvergenceError, DomainError
from mpsb.special import ChfArgs, chf_1f1_log, log_beta_fn, log_gamma_fn, log_kummer_series

from oracles import kummer_series_log


class TestLogGamma:
    def test_known_values(self):
        assert log_gamma_fn(1.0) == 0.0
        np.testing.assert_allclose(log_gamma_fn(0.5), 0.5723649429247001, rtol=1e-14)
        np.testing.assert_allclose(log_gamma_fn(10.0), math.log(362880.0), rtol=1e-14)

    def test_relative_accuracy_over_range(self):
        x = np.geomspace(1e-6, 1e6, 400)
        ref = np.array([math.lgamma(v) for v in x])
        got = log_gamma_fn(x)
        # near the zeros of ln Gamma at 1 and 2 compare absolutely
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma_fn(bad)

    def test_log_beta(self):
        np.testing.assert_allclose(log_beta_fn(2.0, 3.0), math.log(1 / 12), rtol=1e-14)
        with pytest.raises(DomainError):
            log_beta_fn(0.0, 1.0)

    def test_array_in_array_out(self):
        out = log_gamma_fn(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert out.shape == (2, 2)
        np.testing.assert_allclose(out, np.log([[1, 1], [2, 6]]), atol=1e-15)


class TestChfArgs:
    def test_valid(self):
        args = ChfArgs(1.0, 2.0, 0.0)
        assert args.c == 0.0

    @pytest.mark.parametrize("a,b,c", [(0.0, 1.0, 1.0), (2.0, 1.0, 1.0), (1.0, 2.0, -1.0), (1.0, np.inf, 1.0)])
    def test_invalid(self, a, b, c):
        with pytest.raises(DomainError):
            ChfArgs(a, b, c)


class TestChfClosedForms:
    def test_zero_argument(self):
        assert chf_1f1_log(ChfArgs(2.7, 5.1, 0.0)) == 0.0

    def test_equal_parameters(self):
        # M(a; a; -c) = e^{-c}
        assert chf_1f1_log(3.0, 3.0, 4.0) == -4.0

    @pytest.mark.parametrize("c", [1e-8, 0.3, 2.0, 17.0, 29.9, 30.1, 75.0, 400.0])
    def test_one_two(self, c):
        # M(1; 2; -c) = (1 - e^{-c}) / c
        np.testing.assert_allclose(chf_1f1_log(1.0, 2.0, c), math.log(-math.expm1(-c) / c), rtol=1e-12, atol=1e-13)

    def test_one_two_at_two(self):
        np.testing.assert_allclose(chf_1f1_log(1.0, 2.0, 2.0), -0.8385606384, atol=1e-10)

    @pytest.mark.parametrize("a,c", [(0.5, 3.0), (2.5, 40.0), (7.0, 0.01)])
    def test_equal_parameters_grid(self, a, c):
        np.testing.assert_allclose(chf_1f1_log(a, a, c), -c, rtol=1e-12)


class TestChfOracle:
    def test_derived_example(self):
        np.testing.assert_allclose(chf_1f1_log(4.3, 9.8, 17.2), kummer_series_log(4.3, 9.8, 17.2), rtol=0, atol=1e-10)

    @pytest.mark.parametrize(
        "a,b,c",
        [(0.1, 0.2, 99.0), (49.0, 99.0, 99.0), (0.3, 50.0, 31.0), (25.0, 25.1, 60.0), (3.0, 5.0, 30.0), (12.0, 20.0, 1e-3)],
    )
    def test_edge_triples(self, a, b, c):
        np.testing.assert_allclose(chf_1f1_log(a, b, c), kummer_series_log(a, b, c), rtol=0, atol=1e-10)

    def test_large_argument(self):
        # model-scale tilts reach the thousands
        for a, b, c in [(15.0, 25.0, 1500.0), (3.0, 10.0, 5000.0), (200.0, 205.0, 800.0)]:
            np.testing.assert_allclose(chf_1f1_log(a, b, c), kummer_series_log(a, b, c), rtol=1e-12)

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0.1, 20, 50)
        b = a + rng.uniform(0.1, 20, 50)
        c = rng.uniform(0, 80, 50)
        vec = chf_1f1_log(a, b, c)
        scal = np.array([chf_1f1_log(float(x), float(y), float(z)) for x, y, z in zip(a, b, c)])
        np.testing.assert_array_equal(vec, scal)

    def test_scalar_returns_float(self):
        assert isinstance(chf_1f1_log(1.0, 2.0, 3.0), float)


class TestChfProperties:
    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(0.1, 30.0),
        st.floats(0.1, 30.0),
        st.lists(st.floats(0.0, 90.0), min_size=2, max_size=6, unique=True),
    )
    def test_decreasing_in_c(self, a, gap, cs):
        cs = np.sort(np.array(cs))
        vals = chf_1f1_log(np.full(cs.size, a), np.full(cs.size, a + gap), cs)
        assert np.all(np.diff(vals) < 0)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.1, 30.0), st.floats(0.1, 30.0), st.floats(0.0, 30.0))
    def test_kummer_identity(self, a, gap, c):
        b = a + gap
        rhs = -c + log_kummer_series(b - a, b, c)
        np.testing.assert_allclose(chf_1f1_log(a, b, c), rhs, rtol=1e-10, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.2, 20.0), st.floats(1.2, 20.0), st.floats(0.0, 60.0))
    def test_contiguous_relation(self, a, gap, c):
        # b(b-1)M(a;b-1;z) + b(1-b-z)M(a;b;z) + z(b-a)M(a;b+1;z) = 0, z = -c
        b = a + gap
        z = -c
        logs = chf_1f1_log(np.array([a, a, a]), np.array([b - 1, b, b + 1]), np.array([c, c, c]))
        scale = logs.max()
        m = np.exp(logs - scale)
        terms = np.array([b * (b - 1) * m[0], b * (1 - b - z) * m[1], z * (b - a) * m[2]])
        resid = abs(terms.sum()) / np.abs(terms).max()
        assert resid < 1e-8

    def test_agrees_with_scipy_where_reliable(self):
        a, b, c = 2.5, 6.0, np.linspace(0, 20, 21)
        np.testing.assert_allclose(chf_1f1_log(a, b, c), np.log(sc.hyp1f1(a, b, -c)), rtol=1e-10, atol=1e-12)


class TestChfErrors:
    def test_domain(self):
        with pytest.raises(DomainError):
            chf_1f1_log(1.0, 0.5, 1.0)
        with pytest.raises(DomainError):
            chf_1f1_log(-1.0, 2.0, 1.0)

    def test_budget_exhaustion_carries_partial(self):
        with pytest.raises(ConvergenceError) as info:
            log_kummer_series(5.0, 6.0, 25.0, max_terms=5)
        assert np.all(np.isfinite(info.value.partial))
