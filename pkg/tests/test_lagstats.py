import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from denoise_forecast.errors import DegenerateSeries, LagTooLarge
from denoise_forecast.lagstats import acf, durbin_levinson, pacf, select_lag


def simulate_ar(phi, n, seed, burn=500):
    rng = np.random.default_rng(seed)
    p = len(phi)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(p, n + burn):
        x[t] = e[t] + sum(phi[i] * x[t - i - 1] for i in range(p))
    return x[burn:]


def regression_pacf(x, k):
    """Last coefficient of a least-squares AR(k) fit on the zero-padded, centred series.

    Padding both ends with k zeros makes the normal equations exactly the
    sample Yule-Walker system, so this is a brute-force route to the same
    quantity Durbin-Levinson computes recursively.
    """
    y = np.concatenate([np.zeros(k), x - x.mean(), np.zeros(k)])
    rows = len(x) + k
    design = np.column_stack([y[k - i - 1 : k - i - 1 + rows] for i in range(k)])
    target = y[k : k + rows]
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coef[-1]


class TestAcf:
    def test_white_noise_small(self):
        r = acf(np.random.default_rng(0).normal(size=10000), 20)
        assert np.all(np.abs(r[1:]) < 0.03)

    def test_lag_zero_is_one(self):
        assert acf(np.random.default_rng(1).normal(size=50) * 9 + 3, 5)[0] == 1.0

    def test_ar1_matches_theory(self):
        r = acf(simulate_ar([0.8], 20000, 0), 5)
        for d in range(6):
            assert abs(r[d] - 0.8**d) < 0.05

    def test_by_definition(self):
        x = np.random.default_rng(2).normal(size=30)
        y = x - x.mean()
        r = acf(x, 4)
        for d in range(5):
            assert r[d] == pytest.approx(sum(y[t] * y[t + d] for t in range(30 - d)) / sum(y * y))

    def test_errors(self):
        with pytest.raises(LagTooLarge):
            acf(np.ones(10), 5)
        with pytest.raises(LagTooLarge):
            acf(np.arange(10.0), 0)
        with pytest.raises(DegenerateSeries):
            acf(np.full(50, 2.0), 5)


class TestPacf:
    def test_ar1_cuts_off(self):
        results = [pacf(simulate_ar([0.8], 20000, seed), 10) for seed in range(10)]
        for res in results:
            assert abs(res.values[1] - 0.8) < 0.05
        # each lag 2..10 individually inside the band in >= 8 of 10 seeds
        for k in range(2, 11):
            inside = sum(abs(res.values[k]) < res.confidence_bound for res in results)
            assert inside >= 8

    def test_ar2_selected_lag(self):
        hits = sum(pacf(simulate_ar([0.5, 0.3], 20000, s), 20).selected_lag == 2 for s in range(10))
        assert hits >= 8

    def test_ar1_selected_lag(self):
        hits = sum(pacf(simulate_ar([0.8], 20000, s), 20).selected_lag == 1 for s in range(10))
        assert hits >= 8

    def test_values_zero_is_one_and_bound(self):
        x = np.random.default_rng(3).normal(size=400)
        res = pacf(x, 10)
        assert res.values[0] == 1.0
        assert res.confidence_bound == pytest.approx(1.96 / 20)
        assert 1 <= res.selected_lag <= 10
        assert res.max_lag == 10

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("n", [200, 1000])
    def test_matches_brute_force_regression(self, seed, n):
        x = simulate_ar([0.4, -0.2, 0.1], n, seed) + 5.0
        res = pacf(x, 10)
        for k in range(1, 11):
            assert abs(res.values[k] - regression_pacf(x, k)) < 1e-6

    def test_matches_statsmodels(self):
        sm = pytest.importorskip("statsmodels.tsa.stattools")
        x = simulate_ar([0.6, 0.2], 2000, 9)
        np.testing.assert_allclose(pacf(x, 15).values, sm.pacf(x, 15, method="ywm"), atol=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**16), n=st.integers(30, 300))
    def test_bounded(self, seed, n):
        rng = np.random.default_rng(seed)
        x = np.cumsum(rng.normal(size=n)) if seed % 2 else rng.normal(size=n)
        res = pacf(x, min(12, n // 2 - 1))
        assert res.values[0] == 1
        assert np.all(np.abs(res.values) <= 1 + 1e-8)
        assert 1 <= res.selected_lag <= res.max_lag


class TestSelectLag:
    BOUND = 0.1

    def test_cutoff(self):
        assert select_lag([1, 0.9, 0.5, 0.05, 0.3], self.BOUND) == 2

    def test_largest(self):
        assert select_lag([1, 0.9, 0.5, 0.05, 0.3], self.BOUND, rule="largest") == 4

    @pytest.mark.parametrize("rule", ["cutoff", "largest"])
    def test_fallback(self, rule):
        assert select_lag([1, 0.01, -0.02, 0.0], self.BOUND, rule=rule) == 1

    def test_cutoff_skips_leading_insignificant(self):
        assert select_lag([1, 0.01, 0.5], self.BOUND) == 1

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            select_lag([1, 0.5], 0.1, rule="aic")


def test_durbin_levinson_white_noise_autocorrelation():
    np.testing.assert_array_equal(durbin_levinson(np.array([1.0, 0.0, 0.0])), [1.0, 0.0, 0.0])


def test_durbin_levinson_exact_ar1():
    rho = 0.7 ** np.arange(6)
    np.testing.assert_allclose(durbin_levinson(rho), [1, 0.7, 0, 0, 0, 0], atol=1e-14)
