"""Readout tests: forward fixtures, gradient oracles, training contracts."""

import numpy as np
import pytest

from qrcbench.mlp import (
    MlpParams,
    TrainConfig,
    TrainingDiverged,
    class_input_gradients,
    forward,
    init_params,
    input_gradient,
    loss_and_grads,
    predict,
    softmax,
    train,
)


def zero_params(d=3, c=4):
    p = init_params(d, c, seed=0)
    for w in p.weights:
        w[:] = 0.0
    return p


def tiny_params():
    """Hand-sized 2 -> 2 -> 2 net; logits recomputed by hand in tests."""
    w1 = np.array([[1.0, 0.0], [0.0, -1.0]])
    b1 = np.array([0.5, 0.25])
    w2 = np.array([[2.0, 1.0], [0.0, 1.0]])
    b2 = np.array([0.0, -0.1])
    return MlpParams([w1, w2], [b1, b2])


# ---------------------------------------------------------------------------
# forward

def test_zero_weights_give_uniform_softmax():
    params = zero_params(3, 4)
    logits = forward(params, np.array([0.2, -1.0, 3.0]))
    assert np.array_equal(logits, np.zeros(4))
    assert np.allclose(softmax(logits), 0.25)
    loss, _ = loss_and_grads(params, np.array([[0.2, -1.0, 3.0]]), [2])
    assert loss == pytest.approx(np.log(4.0), abs=1e-12)


def test_hand_computed_tiny_network():
    # x = (1, 2): a1 = (1*1 + 0.5, -2 + 0.25) = (1.5, -1.75)
    # relu -> (1.5, 0); logits = (2*1.5 + 0, 0 - 0.1) = (3.0, -0.1)
    params = tiny_params()
    logits = forward(params, np.array([1.0, 2.0]))
    assert np.allclose(logits, [3.0, -0.1], atol=1e-15)


def test_eval_mode_deterministic_and_dropout_free():
    params = init_params(6, 3, seed=7)
    x = np.linspace(-1, 1, 6)
    a = forward(params, x)
    b = forward(params, x)
    assert np.array_equal(a, b)
    # dropout applies only when train_mode is set with an rng
    c = forward(params, x, train_mode=False, dropout_rate=0.5)
    assert np.array_equal(a, c)


def test_train_mode_dropout_changes_activations():
    params = init_params(6, 3, seed=7)
    x = np.linspace(-1, 1, 6)
    rng = np.random.default_rng(0)
    dropped = forward(params, x, train_mode=True, dropout_rate=0.5, rng=rng)
    assert not np.allclose(dropped, forward(params, x))


def test_softmax_sums_to_one(rng):
    params = init_params(5, 7, seed=3)
    for _ in range(20):
        probs = softmax(forward(params, rng.standard_normal(5)))
        assert abs(probs.sum() - 1.0) <= 1e-12


def test_shape_mismatch_rejected():
    params = init_params(4, 2, seed=0)
    with pytest.raises(ValueError):
        forward(params, np.zeros(5))


# ---------------------------------------------------------------------------
# gradient oracles

def finite_difference_param_grads(params, x, y, h=1e-6):
    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]
    for arrs, grads in ((params.weights, grads_w), (params.biases, grads_b)):
        for arr, grad in zip(arrs, grads):
            flat = arr.ravel()
            gflat = grad.ravel()
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                lp, _ = loss_and_grads(params, x, y)
                flat[i] = keep - h
                lm, _ = loss_and_grads(params, x, y)
                flat[i] = keep
                gflat[i] = (lp - lm) / (2 * h)
    return grads_w, grads_b


def test_parameter_gradients_match_finite_differences(rng):
    params = MlpParams(
        [rng.standard_normal((3, 4)) * 0.5, rng.standard_normal((2, 3)) * 0.5],
        [rng.standard_normal(3) * 0.1, rng.standard_normal(2) * 0.1])
    x = rng.standard_normal((5, 4))
    y = rng.integers(0, 2, 5)
    _, (gw, gb) = loss_and_grads(params, x, y)
    fw, fb = finite_difference_param_grads(params, x, y)
    for got, want in zip(gw + gb, fw + fb):
        denom = np.maximum(np.abs(want), 1e-3)
        assert np.max(np.abs(got - want) / denom) < 1e-5


def test_input_gradient_matches_finite_differences(rng):
    params = init_params(6, 3, seed=11)
    x = rng.standard_normal(6)
    got = input_gradient(params, x, 1)
    h = 1e-6
    fd = np.zeros(6)
    for i in range(6):
        bump = np.zeros(6)
        bump[i] = h
        lp, _ = loss_and_grads(params, (x + bump)[None, :], [1])
        lm, _ = loss_and_grads(params, (x - bump)[None, :], [1])
        fd[i] = (lp - lm) / (2 * h)
    denom = np.maximum(np.abs(fd), 1e-3)
    assert np.max(np.abs(got - fd) / denom) < 1e-5


def test_class_gradients_match_finite_differences(rng):
    params = init_params(4, 3, seed=5)
    x = rng.standard_normal(4)
    logits, grads = class_input_gradients(params, x)
    h = 1e-6
    for c in range(3):
        for i in range(4):
            bump = np.zeros(4)
            bump[i] = h
            fd = (forward(params, x + bump)[c] - forward(params, x - bump)[c]) / (2 * h)
            assert grads[c, i] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_zero_network_has_zero_input_gradient():
    params = zero_params(4, 3)
    assert np.array_equal(input_gradient(params, np.ones(4), 0), np.zeros(4))


def test_duplicated_sample_keeps_mean_loss(rng):
    params = init_params(4, 3, seed=2)
    x = rng.standard_normal(4)
    single, _ = loss_and_grads(params, x[None, :], [1])
    double, _ = loss_and_grads(params, np.stack([x, x]), [1, 1])
    assert single == pytest.approx(double, abs=1e-15)


def test_linear_regime_logit_gradients_independent_of_input(rng):
    # biases large enough to keep every ReLU active make the logits
    # affine in the input, so their gradients cannot depend on it
    params = init_params(4, 3, seed=9)
    params.biases[0][:] = 50.0
    params.biases[1][:] = 5000.0
    _, g1 = class_input_gradients(params, 0.1 * rng.standard_normal(4))
    _, g2 = class_input_gradients(params, 0.1 * rng.standard_normal(4))
    assert np.allclose(g1, g2, atol=1e-9)


def test_empty_batch_rejected():
    params = init_params(4, 3, seed=0)
    with pytest.raises(ValueError):
        loss_and_grads(params, np.zeros((0, 4)), np.zeros(0, int))


# ---------------------------------------------------------------------------
# training

def separable_toy(rng, n=80):
    half = n // 2
    x = np.concatenate([rng.normal(-2.0, 0.3, (half, 2)),
                        rng.normal(+2.0, 0.3, (half, 2))])
    y = np.concatenate([np.zeros(half, int), np.ones(half, int)])
    return x, y


def test_training_reaches_full_accuracy_on_separable_toy(rng):
    x, y = separable_toy(rng)
    params = init_params(2, 2, seed=0)
    cfg = TrainConfig(max_epochs=60, rng_seed=0)
    trained, history = train(params, x, y, cfg)
    assert history.accuracy[-1] == 1.0


def test_loss_moving_average_decreases(rng):
    x, y = separable_toy(rng)
    params = init_params(2, 2, seed=0)
    _, history = train(params, x, y, TrainConfig(max_epochs=30, rng_seed=0))
    first = np.mean(history.loss[:5])
    last = np.mean(history.loss[-5:])
    assert last < first


def test_seed_determinism_bitwise(rng):
    x, y = separable_toy(rng)
    cfg = TrainConfig(max_epochs=10, rng_seed=42)
    a, _ = train(init_params(2, 2, seed=42), x, y, cfg)
    b, _ = train(init_params(2, 2, seed=42), x, y, cfg)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(wa, wb)


def test_shuffle_is_pure_function_of_seed_and_epoch(rng):
    # the epoch-e permutation must not depend on anything trained before
    perm_fresh = np.random.default_rng([7, 2, 3]).permutation(50)
    x, y = separable_toy(rng, n=50)
    train(init_params(2, 2, seed=7), x, y, TrainConfig(max_epochs=2, rng_seed=7))
    perm_after = np.random.default_rng([7, 2, 3]).permutation(50)
    assert np.array_equal(perm_fresh, perm_after)


def test_divergence_aborts_with_diagnostics(rng):
    x, y = separable_toy(rng)
    params = init_params(2, 2, seed=0)
    bad = TrainConfig(max_epochs=5, learning_rate=1e155, rng_seed=0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged):
            train(params, x * 1e150, y, bad)


def test_history_lengths(rng):
    x, y = separable_toy(rng)
    _, history = train(init_params(2, 2, seed=1), x, y,
                       TrainConfig(max_epochs=7, rng_seed=1))
    assert len(history.loss) == 7 and len(history.accuracy) == 7


def test_predict_labels(rng):
    x, y = separable_toy(rng)
    trained, _ = train(init_params(2, 2, seed=3), x, y,
                       TrainConfig(max_epochs=40, rng_seed=3))
    assert np.mean(predict(trained, x) == y) == 1.0
