import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windbo.acquisition import (YStarPool, mes_batch, mes_gain, mes_value, msp_batch, msp_value, sample_ystars,
                                sigma_floor, switch_check)
from windbo.benchmarks import AckleyConfig, ackley
from windbo.de import DeConfig
from windbo.kriging import Dataset, fit
from windbo.sampling import standard_lhs

# Independent value from scipy.stats.norm: 1*pdf(1)/(2*cdf(1)) - ln cdf(1).
GAIN_AT_ONE = 0.31655376449303907


def test_gain_oracle_at_one():
    assert float(mes_gain(1.0)) == pytest.approx(GAIN_AT_ONE, abs=1e-12)


@pytest.mark.xfail(strict=True, reason="published reference value is off by 1.5e-5; see decisions ledger")
def test_gain_published_reference_value():
    assert abs(float(mes_gain(1.0)) - 0.316539) <= 1e-5


def test_gain_at_zero_is_ln2():
    assert float(mes_gain(0.0)) == pytest.approx(np.log(2.0), abs=1e-15)


def test_gain_finite_and_nonnegative_on_wide_range():
    g = mes_gain(np.linspace(-40.0, 40.0, 200001))
    assert np.all(np.isfinite(g))
    assert np.all(g >= 0.0)


def test_gain_decreasing_in_gamma():
    g = mes_gain(np.linspace(-40.0, 8.0, 20001))
    assert np.all(np.diff(g) <= 1e-15)


def test_gain_extreme_inputs():
    g = mes_gain([-500.0, 500.0])
    assert np.all(np.isfinite(g))
    assert g[1] == 0.0


@pytest.fixture(scope="module")
def ackley_model():
    cfg = AckleyConfig(d=2)
    space = cfg.space()
    X = standard_lhs(space, 25, seed=11).points
    y = -ackley(X, cfg)
    return fit(Dataset(X, y), space, seed=0), space


def test_mes_nonnegative_over_many_probes(ackley_model):
    model, space = ackley_model
    P = np.random.default_rng(0).uniform(space.lower, space.upper, (100000, 2))
    pool = YStarPool(np.max(model.y) + np.array([0.1, 0.5, 2.0]))
    v = mes_batch(model, P, pool, exact=False)
    assert np.all(np.isfinite(v))
    assert np.all(v >= 0.0)


def test_mes_zero_at_training_points(ackley_model):
    model, _ = ackley_model
    pool = YStarPool([np.max(model.y) + 1.0])
    assert np.all(mes_batch(model, model.X, pool) == 0.0)


@settings(max_examples=200, deadline=None)
@given(gap=st.floats(0.0, 50.0), s1=st.floats(1e-3, 10.0), s2=st.floats(1e-3, 10.0))
def test_gain_grows_with_sigma_when_ystar_above_mean(gap, s1, s2):
    lo, hi = sorted((s1, s2))
    assert mes_gain(gap / hi) >= mes_gain(gap / lo)


def test_single_and_batch_agree(ackley_model):
    model, space = ackley_model
    pool = YStarPool(np.max(model.y) + np.array([0.3, 1.0]))
    P = standard_lhs(space, 9, seed=1).points
    assert np.array_equal(mes_batch(model, P, pool), [mes_value(model, x, pool) for x in P])
    assert np.array_equal(msp_batch(model, P), [msp_value(model, x) for x in P])


def test_sigma_floor_positive(ackley_model):
    model, _ = ackley_model
    assert sigma_floor(model) >= 1e-12


def test_pool_rejects_empty_and_nan():
    with pytest.raises(ValueError):
        YStarPool([])
    with pytest.raises(ValueError):
        YStarPool([np.nan])


def test_ystar_pool_respects_best_observation(ackley_model):
    model, space = ackley_model
    pool = sample_ystars(model, space, DeConfig(population_size=20, max_generations=30), K=3, seed=5)
    assert len(pool) == 3
    assert np.all(pool.values > np.max(model.y))
    again = sample_ystars(model, space, DeConfig(population_size=20, max_generations=30), K=3, seed=5)
    assert np.array_equal(pool.values, again.values)


def test_ystar_needs_positive_k(ackley_model):
    model, space = ackley_model
    with pytest.raises(ValueError):
        sample_ystars(model, space, DeConfig(), K=0)


def test_switch_check_l1_threshold():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert switch_check([1.1, 1.1], X, 0.2 + 1e-12)
    assert not switch_check([1.1, 1.1], X, 0.19)
    assert switch_check([0.0, 0.0], X, 0.0)
    with pytest.raises(ValueError):
        switch_check([0.0], X, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(0, 5))
def test_switch_check_matches_brute_force(x, eps):
    X = np.random.default_rng(0).uniform(-10, 10, (20, 3))
    expected = any(np.sum(np.abs(row - np.array(x))) <= eps for row in X)
    assert switch_check(x, X, eps) == expected
