import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zgrsim.errors import ConfigError, DegenerateStatsError, UnboundedSpeedup
from zgrsim.theory import (
    EstimatorStats,
    accuracy_ratio,
    descent_iterations,
    grid_search_lambda,
    montecarlo_mse,
    mse_lambda,
    optimal_lambda,
    speedup_ratio,
)

S = EstimatorStats(d=100, sigma2=0.9, bias2=0.01, tau2=9.99)


def test_frozen_values():
    assert mse_lambda(S, 0.0) == pytest.approx(90.0)
    assert mse_lambda(S, 1.0) == pytest.approx(10.0)
    assert mse_lambda(S, 0.5) == pytest.approx(25.0)
    assert optimal_lambda(S) == pytest.approx(0.9)
    assert mse_lambda(S, 0.9) == pytest.approx(9.0)
    assert speedup_ratio(S) == pytest.approx(10.0)
    assert accuracy_ratio(S) == pytest.approx(0.9)


stats_strategy = st.builds(
    EstimatorStats,
    d=st.integers(1, 10_000),
    sigma2=st.floats(1e-4, 1e3),
    bias2=st.floats(1e-4, 1e3),
    tau2=st.floats(0.0, 1e3),
)


@settings(max_examples=60, deadline=None)
@given(stats_strategy)
def test_optimal_lambda_matches_grid(stats):
    lam = optimal_lambda(stats)
    assert 0 <= lam <= 1
    assert abs(lam - grid_search_lambda(stats, 1e-3)) <= 1e-3
    assert mse_lambda(stats, lam) <= min(mse_lambda(stats, 0), mse_lambda(stats, 1)) + 1e-9


@settings(max_examples=60, deadline=None)
@given(stats_strategy)
def test_minimum_mse_is_harmonic_form(stats):
    a, b = stats.zoo_error, stats.bp_error
    assert mse_lambda(stats, optimal_lambda(stats)) == pytest.approx(a * b / (a + b), rel=1e-9)
    assert speedup_ratio(stats) == pytest.approx(1 + a / b, rel=1e-12)
    assert accuracy_ratio(stats) == pytest.approx(a / (a + b), rel=1e-12)


def test_degenerate_cases():
    with pytest.raises(UnboundedSpeedup):
        speedup_ratio(EstimatorStats(10, 1.0))
    with pytest.raises(DegenerateStatsError):
        optimal_lambda(EstimatorStats(10, 0.0))
    with pytest.raises(DegenerateStatsError):
        accuracy_ratio(EstimatorStats(10, 0.0, 1.0))
    with pytest.raises(ConfigError):
        EstimatorStats(0, 1.0)
    with pytest.raises(ConfigError):
        EstimatorStats(3, -1.0)
    with pytest.raises(ConfigError):
        mse_lambda(S, 1.2)
    with pytest.raises(ConfigError):
        montecarlo_mse(S, 0.5, trials=10)


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.9, 1.0])
def test_montecarlo_matches_closed_form(lam):
    assert montecarlo_mse(S, lam, trials=4000, seed=1) == pytest.approx(mse_lambda(S, lam), rel=0.05)


def test_descent_mixed_is_faster():
    small = EstimatorStats(d=10, sigma2=0.9, bias2=0.01, tau2=0.99)
    zoo = descent_iterations(small, 0.0, 0.5, range(4), 50_000)
    mixed = descent_iterations(small, optimal_lambda(small), 0.5, range(4), 50_000)
    assert mixed.mean() < zoo.mean()


def test_descent_noiseless_single_step():
    # with no noise the 1/(mu t) step lands on the optimum at t = 1
    exact = EstimatorStats(d=3, sigma2=0.0, bias2=0.0, tau2=0.0)
    assert list(descent_iterations(exact, 0.0, 1e-12, [0, 1], 10)) == [1, 1]


BIG = EstimatorStats(d=1000, sigma2=1.0, bias2=4.0, tau2=6.0)


def test_reference_stats():
    lam = optimal_lambda(BIG)
    assert lam == pytest.approx(1000 / 1010, rel=1e-12)
    assert abs(lam - grid_search_lambda(BIG)) <= 1e-3
    assert mse_lambda(BIG, lam) == pytest.approx(1000 * 10 / 1010, rel=1e-12)
    assert speedup_ratio(BIG) == pytest.approx(101)
    assert accuracy_ratio(BIG) == pytest.approx(1 / 1.01)


def test_limits():
    assert optimal_lambda(EstimatorStats(10, 1.0)) == 1.0
    assert optimal_lambda(EstimatorStats(10, 0.0, 1.0, 1.0)) == 0.0
    assert speedup_ratio(EstimatorStats(10, 0.0, 1.0)) == 1.0
    assert accuracy_ratio(EstimatorStats(10, 1.0)) == 1.0


@settings(max_examples=40, deadline=None)
@given(stats_strategy, st.floats(1e-3, 100))
def test_speedup_decreases_with_bias(stats, extra):
    worse = EstimatorStats(stats.d, stats.sigma2, stats.bias2 + extra, stats.tau2)
    assert speedup_ratio(worse) < speedup_ratio(stats)
    s, a = speedup_ratio(stats), accuracy_ratio(stats)
    assert a == pytest.approx((s - 1) / s, rel=1e-9)


def test_montecarlo_ordering_and_argmin():
    s = EstimatorStats(d=1000, sigma2=1.0, bias2=4.0, tau2=6.0)
    lam = optimal_lambda(s)
    mc = {x: montecarlo_mse(s, x, trials=2000, seed=3) for x in (0.0, lam, 1.0)}
    assert mc[lam] < mc[0.0] and mc[lam] < mc[1.0]
    grid = np.linspace(0.9, 1.0, 51)
    emp = [montecarlo_mse(s, float(x), trials=1000, seed=4) for x in grid]
    assert abs(grid[int(np.argmin(emp))] - lam) <= 0.02
    assert montecarlo_mse(EstimatorStats(100, 1.0), 0.0, 10_000, seed=5) == pytest.approx(100, rel=0.05)
