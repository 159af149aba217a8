import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from denoise_forecast.errors import EmptyInput, LengthMismatch, ZeroActual
from denoise_forecast.metrics import evaluate, mae, mape, rmse, sdape

nonzero = st.floats(0.5, 1e4) | st.floats(-1e4, -0.5)


def test_rmse_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0
    assert abs(rmse([1, 2], [2, 4]) - math.sqrt(2.5)) < 1e-12
    assert rmse([0, 0, 0], [1, 1, 1]) == 1


def test_mae_examples():
    assert mae([4, 5], [4, 5]) == 0
    assert mae([1, 2], [2, 4]) == 1.5
    assert mae([1, 2], [2, 4]) == mae([2, 4], [1, 2])


def test_mape_examples():
    assert abs(mape([100], [99]) - 1.0) < 1e-12
    assert mape([3, 4], [3, 4]) == 0


def test_sdape_examples():
    assert sdape([50], [60]) == 0
    y = np.array([100.0, 250.0, 7.0])
    assert abs(sdape(y, 1.01 * y)) < 1e-12
    assert sdape([100, 100], [99, 102]) == pytest.approx(0.005, abs=1e-15)


def test_evaluate_exposes_both_scales():
    r = evaluate([100, 100], [99, 102])
    assert r.n == 2
    assert r.mape == pytest.approx(1.5)
    assert r.mape_fraction == pytest.approx(0.015)
    assert r.sdape == pytest.approx(0.005)
    assert r.sdape_percent == pytest.approx(0.5)
    assert set(r.to_dict()) == {"rmse", "mae", "mape", "sdape", "n", "mape_fraction", "sdape_percent"}


def test_errors():
    with pytest.raises(LengthMismatch):
        rmse([1, 2], [1])
    with pytest.raises(EmptyInput):
        mae([], [])
    with pytest.raises(ZeroActual):
        mape([1, 0], [1, 1])
    with pytest.raises(ZeroActual):
        sdape([0], [1])


@st.composite
def pairs(draw):
    n = draw(st.integers(1, 40))
    y = draw(arrays(np.float64, n, elements=nonzero))
    yhat = draw(arrays(np.float64, n, elements=st.floats(-1e4, 1e4)))
    return y, yhat


@settings(max_examples=200)
@given(pairs())
def test_mae_at_most_rmse(p):
    y, yhat = p
    assert mae(y, yhat) <= rmse(y, yhat) * (1 + 1e-12) + 1e-12


@settings(max_examples=100)
@given(pairs(), st.randoms(use_true_random=False))
def test_permutation_invariance(p, rnd):
    y, yhat = p
    perm = list(range(len(y)))
    rnd.shuffle(perm)
    a, b = evaluate(y, yhat), evaluate(y[perm], yhat[perm])
    for key in ("rmse", "mae", "mape", "sdape"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), rel=1e-12, abs=1e-12)


@settings(max_examples=100)
@given(pairs())
def test_non_negative_and_zero_iff_equal(p):
    y, yhat = p
    r = evaluate(y, yhat)
    assert min(r.rmse, r.mae, r.mape, r.sdape) >= 0
    e = evaluate(y, y)
    assert e.rmse == e.mae == e.mape == e.sdape == 0
    if np.any(y != yhat):
        assert r.rmse > 0 and r.mae > 0 and r.mape > 0


@settings(max_examples=100)
@given(pairs(), st.floats(0.01, 100) | st.floats(-100, -0.01))
def test_mape_scale_invariant(p, c):
    y, yhat = p
    assert mape(c * y, c * yhat) == pytest.approx(mape(y, yhat), rel=1e-9, abs=1e-12)


@settings(max_examples=100)
@given(pairs())
def test_depends_only_on_residual_and_actual(p):
    y, yhat = p
    resid = y - yhat
    assert rmse(y, yhat) == pytest.approx(math.sqrt(np.mean(resid**2)), rel=1e-12, abs=1e-12)
    assert mae(y, yhat) == pytest.approx(np.mean(np.abs(resid)), rel=1e-12, abs=1e-12)
    assert mape(y, yhat) == pytest.approx(np.mean(np.abs(resid / y)) * 100, rel=1e-12, abs=1e-12)
