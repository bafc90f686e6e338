import numpy as np
import pytest

from deepratio.autonet import (
    MlpModel,
    OptimizerState,
    ParamGrads,
    adam_step,
    gradient_check,
    l2_penalty,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    mlp_init,
    rescale_output,
    save_checkpoint,
)


def _linear(w, b=0.0, l2=0.0):
    w = np.asarray(w, dtype=float)
    return MlpModel((w.shape[0], 1), [w.reshape(-1, 1)], [np.array([b])], l2, 1.0)


def _sum_loss(out):
    return float(np.sum(out)), np.ones_like(out)


def test_zero_network_outputs_zero():
    m = mlp_init([3, 4, 1], seed=0)
    for w in m.weights:
        w[:] = 0
    for b in m.biases:
        b[:] = 0
    np.testing.assert_array_equal(m.predict(np.random.default_rng(0).normal(size=(5, 3))), 0.0)


def test_hand_computed_rectifier():
    m = _linear([1.0, -1.0])
    assert m.predict(np.array([[3.0, 1.0]]))[0] == 2.0
    assert m.predict(np.array([[1.0, 3.0]]))[0] == 0.0


def test_init_is_seeded_and_scaled():
    a = mlp_init([20, 50, 1], seed=3)
    b = mlp_init([20, 50, 1], seed=3)
    c = mlp_init([20, 50, 1], seed=4)
    np.testing.assert_array_equal(a.weights[0], b.weights[0])
    assert not np.array_equal(a.weights[0], c.weights[0])
    limit = np.sqrt(6.0 / 20)
    assert np.abs(a.weights[0]).max() <= limit
    big = mlp_init([400, 400, 1], seed=0).weights[0]
    assert abs(big.var() - 2.0 / 400) < 0.05 * 2.0 / 400
    np.testing.assert_array_equal(a.biases[0], 0.01)


def test_init_rejects_bad_sizes():
    for sizes in ([3], [3, 0, 1], [3, 2]):
        with pytest.raises(ValueError):
            mlp_init(sizes)


def test_backward_pure_l2_when_output_grads_zero():
    m = mlp_init([3, 5, 1], seed=1, l2=0.3)
    x = np.random.default_rng(0).normal(size=(4, 3))
    out, tr = mlp_forward(m, x)
    g = mlp_backward(m, tr, np.zeros_like(out))
    for gw, w in zip(g.weights, m.weights):
        np.testing.assert_allclose(gw, 0.3 * w)
    for gb in g.biases:
        np.testing.assert_array_equal(gb, 0.0)


def test_backward_single_unit_chain_rule():
    m = _linear([0.5], b=0.0)
    out, tr = mlp_forward(m, np.array([[2.0]]))
    g = mlp_backward(m, tr, np.array([1.0]))
    assert g.weights[0][0, 0] == 2.0


def test_pass_through_bypasses_dead_output_gate():
    m = _linear([1.0], b=-10.0)
    out, tr = mlp_forward(m, np.array([[1.0]]))
    assert out[0] == 0.0
    assert mlp_backward(m, tr, np.array([-1.0])).biases[0][0] == 0.0
    assert mlp_backward(m, tr, np.array([-1.0]), np.array([True])).biases[0][0] == -1.0


@pytest.mark.parametrize("trial", range(20))
def test_gradients_match_finite_differences(trial):
    rng = np.random.default_rng(trial)
    m = mlp_init([4, 16, 16, 16, 1], seed=trial, l2=0.0)
    x = rng.normal(size=(8, 4))
    w = rng.normal(size=8)

    def loss(out):
        return float(np.sum(w * out**2)), 2 * w * out

    assert gradient_check(m, loss, x, eps=1e-6) < 1e-5


def test_gradient_check_includes_l2():
    m = mlp_init([3, 6, 1], seed=2, l2=0.05)
    x = np.random.default_rng(1).normal(size=(5, 3))
    assert gradient_check(m, _sum_loss, x) < 1e-5


def test_inference_is_deterministic():
    m = mlp_init([3, 8, 8, 1], seed=0, keep_prob=0.5)
    x = np.random.default_rng(0).normal(size=(6, 3))
    np.testing.assert_array_equal(m.predict(x), m.predict(x))


def test_inverted_dropout_expectation():
    m = mlp_init([2, 6, 1], seed=0, keep_prob=0.5)
    x = np.array([[0.7, -0.2]])
    _, clean = mlp_forward(m, x, training=False)
    rng = np.random.default_rng(0)
    acc = np.zeros_like(clean.activations[0])
    n = 10_000
    for _ in range(n):
        _, tr = mlp_forward(m, x, training=True, seed=rng)
        acc += tr.activations[0]
    mean = acc / n
    active = clean.activations[0] > 1e-3
    np.testing.assert_allclose(mean[active], clean.activations[0][active], rtol=0.02)
    # output layer is never masked
    assert tr.masks[-1] is None


def test_adam_first_step_magnitude_is_lr():
    m = _linear([0.0])
    state = OptimizerState.for_model(m, learning_rate=1e-3)
    grads = ParamGrads([np.ones((1, 1))], [np.zeros(1)])
    assert adam_step(m, state, grads)
    assert abs(abs(m.weights[0][0, 0]) - 1e-3) < 1e-8
    assert state.step == 1


def test_adam_skips_non_finite():
    m = _linear([1.0])
    state = OptimizerState.for_model(m)
    with pytest.warns(RuntimeWarning):
        ok = adam_step(m, state, ParamGrads([np.array([[np.nan]])], [np.zeros(1)]))
    assert not ok and state.skipped_steps == 1 and state.step == 0
    assert m.weights[0][0, 0] == 1.0


def test_rescale_output_is_exact():
    m = mlp_init([3, 7, 1], seed=5)
    x = np.random.default_rng(5).normal(size=(9, 3))
    before = m.predict(x)
    rescale_output(m, 2.5)
    np.testing.assert_allclose(m.predict(x), 2.5 * before, rtol=1e-14)
    with pytest.raises(ValueError):
        rescale_output(m, 0.0)


def test_l2_penalty_value():
    m = _linear([3.0, 4.0], l2=0.1)
    assert l2_penalty(m) == pytest.approx(0.5 * 0.1 * 25)


def test_checkpoint_round_trip(tmp_path):
    m = mlp_init([3, 5, 4, 1], seed=9, l2=0.01, keep_prob=0.5)
    back = load_checkpoint(save_checkpoint(m, tmp_path / "m.npz"))
    assert back.layer_sizes == m.layer_sizes
    assert back.l2_coefficient == 0.01 and back.dropout_keep_probability == 0.5
    for a, b in zip(back.parameters(), m.parameters()):
        np.testing.assert_array_equal(a, b)
