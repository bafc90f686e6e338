import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepratio.series import TimeSeriesRecord
from deepratio.window import CostKind, default_rbf_gamma, discrepancy_trace, segment_cost, window_detect


def _step(T=200, tau=100, jump=5.0, noise=0.0, seed=0, d=1):
    rng = np.random.default_rng(seed)
    x = np.zeros((T, d))
    x[tau:] += jump
    return TimeSeriesRecord("step", x + noise * rng.normal(size=(T, d)), tau)


def test_segment_cost_hand_values():
    x = np.array([0.0, 0.0, 2.0, 2.0])
    assert segment_cost(x, CostKind("L2")) == 4.0
    assert segment_cost(x, CostKind("L1")) == 4.0
    assert segment_cost(np.ones(5), CostKind("RBF", rbf_gamma=1.0)) == pytest.approx(0.0, abs=1e-12)
    assert segment_cost(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), CostKind("AR")) == pytest.approx(0.0, abs=1e-18)


def test_cost_kind_validation():
    with pytest.raises(ValueError):
        CostKind("L3")
    with pytest.raises(ValueError):
        CostKind("L2", rbf_gamma=1.0)
    with pytest.raises(ValueError):
        CostKind("AR", ar_order=0)
    assert CostKind("ar").ar_order == 1 and CostKind("AR", ar_order=3).min_size == 4


@pytest.mark.parametrize("cost", ["L1", "L2", "RBF", "AR"])
def test_clean_step_is_found(cost):
    rec = _step(noise=0.1, seed=1)
    assert abs(window_detect(rec, 25, CostKind(cost)) - 100) <= 2


def test_l2_trace_nonnegative():
    tr = discrepancy_trace(_step(noise=1.0, seed=2), 25, CostKind("L2"))
    assert tr.values.min() >= -1e-9
    np.testing.assert_array_equal(tr.times, np.arange(25, 175))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 20), st.integers(1, 3))
def test_l2_gain_nonnegative_random(seed, w, d):
    x = np.random.default_rng(seed).normal(size=(2 * w + 10, d))
    assert discrepancy_trace(TimeSeriesRecord("r", x), w, CostKind("L2")).values.min() >= -1e-9


def test_constant_series_is_flat_and_earliest():
    rec = TimeSeriesRecord("c", np.ones((60, 1)))
    tr = discrepancy_trace(rec, 10, CostKind("L2"))
    np.testing.assert_allclose(tr.values, 0.0, atol=1e-12)
    assert window_detect(rec, 10, CostKind("L2")) == 10


def test_window_too_large_or_small():
    with pytest.raises(ValueError, match="too short"):
        discrepancy_trace(_step(T=40, tau=20), 25, CostKind("L2"))
    with pytest.raises(ValueError, match="too small"):
        discrepancy_trace(_step(), 1, CostKind("L2"))


def test_rbf_default_gamma_is_median_heuristic():
    x = np.array([[0.0], [1.0], [3.0]])
    # squared distances 1, 9, 4 -> median 4
    assert default_rbf_gamma(x) == pytest.approx(1 / 8)
