import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepratio.metrics import (
    NoTransitionError,
    RatioTrace,
    average_detection_lag,
    bootstrap_adl,
    extract_change_point,
    fit_logistic,
    logistic,
)


def _step_trace(n=100, at=50, offset=0):
    v = np.zeros(n)
    v[at:] = 1.0
    return RatioTrace("s", v, offset)


def _grid_oracle(y):
    """Brute-force (k, x0) over a dense grid; independent of the library's search."""
    t = np.arange(len(y), dtype=float)
    best = (np.inf, None, None)
    for k in np.geomspace(0.01, 50, 120):
        for x0 in np.arange(-0.5, len(y) - 0.5, 0.25):
            sse = np.sum((1 / (1 + np.exp(np.clip(-k * (t - x0), -700, 700))) - y) ** 2)
            if sse < best[0]:
                best = (sse, k, x0)
    return best


def test_unit_step_is_located_sharply():
    fit = fit_logistic(_step_trace(), smoothing=1)
    assert abs(fit.x0 - 50) <= 1 and fit.k > 2
    _, k, x0 = _grid_oracle(_step_trace().values)
    assert abs(fit.x0 - x0) <= 1


def test_step_with_default_smoothing():
    idx, fit, clamped = extract_change_point(_step_trace())
    assert abs(idx - 50) <= 1 and not clamped


def test_self_consistency_noiseless():
    t = np.arange(80)
    y = logistic(t, 0.5, 30.0)
    fit = fit_logistic(RatioTrace("g", y), smoothing=1)
    assert abs(fit.k - 0.5) <= 0.05 and abs(fit.x0 - 30) <= 0.5
    assert fit.residual < 1e-6


def test_linear_ramp_midpoint():
    y = np.linspace(0, 1, 61)
    fit = fit_logistic(RatioTrace("r", y), smoothing=1)
    _, _, x0 = _grid_oracle(y)
    assert abs(fit.x0 - 30) <= 2 and abs(fit.x0 - x0) <= 2


def test_constant_trace_rejected():
    with pytest.raises(NoTransitionError, match="no transition signal"):
        fit_logistic(RatioTrace("c", np.full(20, 3.0)))
    with pytest.raises(ValueError):
        fit_logistic(RatioTrace("short", np.array([0.0, 1.0, 2.0])))


def test_trace_validation():
    with pytest.raises(ValueError):
        RatioTrace("n", np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        RatioTrace("n", np.array([1.0, np.inf]))


def test_offset_and_clamping():
    idx, fit, clamped = extract_change_point(_step_trace(offset=20))
    assert idx == 70 and fit.offset == 20
    late = np.zeros(40)
    late[-1] = 1.0
    idx, fit, clamped = extract_change_point(RatioTrace("late", late), smoothing=1)
    assert 0 <= idx <= 39
    if fit.x0 >= 39.5:
        assert clamped and idx == 39


def test_round_half_up():
    from deepratio.metrics import LogisticFit, _round_and_clamp

    assert _round_and_clamp(LogisticFit(1.0, 49.6, 1, 0, 0, 0, 100)) == (50, False)
    assert _round_and_clamp(LogisticFit(1.0, 120.0, 1, 0, 0, 0, 100)) == (99, True)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.floats(0.0, 50.0))
def test_prediction_invariant_to_positive_affine_maps(seed, a, b):
    rng = np.random.default_rng(seed)
    v = np.abs(rng.normal(size=60)) + np.r_[np.zeros(30), np.full(30, 2.0)]
    i1 = extract_change_point(RatioTrace("a", v))[0]
    i2 = extract_change_point(RatioTrace("b", a * v + b))[0]
    assert i1 == i2


def test_adl_arithmetic():
    assert average_detection_lag([100], [100]) == 0
    assert average_detection_lag([10, 20], [12, 26]) == 4
    with pytest.raises(ValueError):
        average_detection_lag([1, 2], [1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=50), st.integers(0, 10_000))
def test_adl_matches_formula_and_is_symmetric(truths, seed):
    preds = np.random.default_rng(seed).integers(0, 1000, len(truths))
    adl = average_detection_lag(truths, preds)
    assert adl == sum(abs(t - p) for t, p in zip(truths, preds)) / len(truths)
    assert adl == average_detection_lag(preds, truths)
    assert adl >= 0
    assert (average_detection_lag(truths, truths) == 0)


def test_bootstrap_degenerate_and_deterministic():
    s = bootstrap_adl([7, 7, 7, 7], runs=30, seed=0)
    assert s.quartiles[1] - s.quartiles[0] == 0 and np.all(s.bootstrap_means == 7)
    assert s.bootstrap_runs == 30 and s.mean == 7
    a, b = bootstrap_adl([1, 5, 9], 30, 4), bootstrap_adl([1, 5, 9], 30, 4)
    np.testing.assert_array_equal(a.bootstrap_means, b.bootstrap_means)


def test_bootstrap_two_point_distribution():
    s = bootstrap_adl([0, 10], runs=1000, seed=1)
    assert 3.5 <= s.bootstrap_means.mean() <= 6.5
    assert set(np.unique(s.bootstrap_means)) <= {0.0, 5.0, 10.0}


def test_summary_mean_is_exact():
    lags = [3, 1, 4, 1, 5, 9, 2, 6]
    assert bootstrap_adl(lags).mean == np.mean(lags)
    with pytest.raises(ValueError):
        bootstrap_adl([])
    with pytest.raises(ValueError):
        bootstrap_adl([1], runs=0)
