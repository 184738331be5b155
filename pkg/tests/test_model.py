import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stic.errors import ConfigError, ShapeError
from stic.model import (
    CausalScoreTensor, ModelParams, build_loss_tape, effects_from_tape, loss,
    mechanism_forward, predict, predict_step, self_loop_mask, time_invariance_forward,
)
from stic.windowing import TimeSeriesDataset, build_window_representation

from conftest import random_problem


def brute_force_predict(W_bar, W_hat):
    d, w = W_bar.shape
    out = np.zeros(d)
    for j in range(d):
        for tau in range(w):
            for i in range(d):
                out[j] += W_bar[i, w - 1 - tau] * W_hat[i, j, tau]
    return out


def hand_forward(W, params):
    """Step-by-step forward pass written without the library helpers."""
    d, w = params.d, params.tau_hat
    feats = [params.kernel_t * W.windows[:, :, p] for p in range(W.c)]
    pooled = sum(feats) / W.c
    z = params.fnn_w1 @ pooled.reshape(-1) + params.fnn_b1
    h = np.array([v if v >= 0 else params.fnn_slope * v for v in z])
    o = params.fnn_w2 @ h + params.fnn_b2
    if params.score_activation == "sigmoid":
        act = 1 / (1 + np.exp(-o))
    else:
        act = np.tanh(o)
    out = act.reshape(d, d, w)
    for i in range(d):
        out[i, i, 0] = 0.0
    return out


def test_initialize_shapes_and_ranges():
    p = ModelParams.initialize(3, 2, n_kernels=2, seed=1)
    assert p.kernel_t.shape == (3, 2) and len(p.kernels_m) == 2
    assert p.hidden == 4 * 3 * 2
    assert p.fnn_w2.shape == (18, 24)
    assert np.all(np.abs(p.fnn_w1) <= 1 / np.sqrt(6))
    np.testing.assert_array_equal(p.prelu_slopes, [0.25, 0.25])


def test_params_validation():
    p = ModelParams.initialize(2, 2, seed=0)
    with pytest.raises(ShapeError):
        p.replace({"fnn.b2": np.zeros(3)})
    with pytest.raises(ConfigError):
        ModelParams.initialize(2, 2, n_kernels=0)
    with pytest.raises(ConfigError):
        ModelParams.initialize(2, 2, score_activation="relu")


def test_replace_round_trips_to_dict():
    p = ModelParams.initialize(3, 3, n_kernels=2, seed=4)
    q = p.replace(p.to_dict())
    for k, v in p.to_dict().items():
        np.testing.assert_array_equal(q.to_dict()[k], v)


@pytest.mark.parametrize("activation", ["tanh", "sigmoid"])
def test_time_invariance_matches_hand_forward(activation):
    W, params = random_problem(7, d=2, tau_bar=1, T=5, activation=activation)
    assert W.c == 3
    out = time_invariance_forward(W, params)
    expected = hand_forward(W, params)
    np.testing.assert_allclose(out.effects, expected, rtol=1e-12)
    np.testing.assert_allclose(out.scores, np.abs(expected), rtol=1e-12)


def test_zero_kernel_gives_bias_only_scores():
    W, params = random_problem(3, d=3, tau_bar=2, T=10, activation="sigmoid")
    params.kernel_t[:] = 0.0
    h = np.where(params.fnn_b1 >= 0, params.fnn_b1, params.fnn_slope * params.fnn_b1)
    o = params.fnn_w2 @ h + params.fnn_b2
    expected = (1 / (1 + np.exp(-o))).reshape(3, 3, 3) * self_loop_mask(3, 3)
    np.testing.assert_allclose(time_invariance_forward(W, params).scores, expected, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), activation=st.sampled_from(["tanh", "sigmoid"]))
def test_score_range_and_mask(seed, activation):
    W, params = random_problem(seed, activation=activation)
    S = time_invariance_forward(W, params)
    d = S.d
    assert np.all(S.scores[np.arange(d), np.arange(d), 0] == 0)
    unmasked = S.scores[self_loop_mask(d, S.lag_depth) == 1]
    assert np.all(unmasked < 1)
    if activation == "sigmoid":
        assert np.all(unmasked > 0)
    else:
        assert np.all(unmasked >= 0)


def test_mechanism_identity_region():
    p = ModelParams.initialize(2, 3, seed=0)
    p.kernels_m[0][:] = 1.0
    x = np.abs(np.random.default_rng(0).standard_normal((2, 3))) + 0.1
    np.testing.assert_array_equal(mechanism_forward(x, p), x)


def test_mechanism_negative_branch():
    p = ModelParams.initialize(2, 2, seed=0)
    p.kernels_m[0][:] = [[2.0, 1.0], [1.0, 1.0]]
    p.prelu_slopes[:] = 0.1
    x = np.array([[-1.0, 1.0], [1.0, 1.0]])
    assert mechanism_forward(x, p)[0, 0] == pytest.approx(0.1 * 2.0 * -1.0)


def test_nested_mechanism_composes():
    p2 = ModelParams.initialize(2, 2, n_kernels=2, seed=3)
    p2.prelu_slopes[:] = [0.2, 0.7]
    x = np.random.default_rng(1).standard_normal((2, 2))
    first = ModelParams.initialize(2, 2, seed=0)
    first.kernels_m = [p2.kernels_m[0]]
    first.prelu_slopes = p2.prelu_slopes[:1]
    second = ModelParams.initialize(2, 2, seed=0)
    second.kernels_m = [p2.kernels_m[1]]
    second.prelu_slopes = p2.prelu_slopes[1:]
    np.testing.assert_allclose(
        mechanism_forward(x, p2), mechanism_forward(mechanism_forward(x, first), second), rtol=1e-15)


def test_mechanism_shape_check():
    p = ModelParams.initialize(2, 2, seed=0)
    with pytest.raises(ShapeError):
        mechanism_forward(np.ones((3, 2)), p)


def test_predict_step_examples():
    rng = np.random.default_rng(0)
    W_bar = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(predict_step(W_bar, np.zeros((3, 3, 2))), 0)
    one_hot = np.zeros((3, 3, 2))
    one_hot[0, 1, 0] = 1.0
    out = predict_step(W_bar, one_hot)
    assert out[1] == W_bar[0, 1] and out[0] == 0 and out[2] == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_predict_step_linear_and_matches_loops(d, w, seed, alpha, beta):
    rng = np.random.default_rng(seed)
    W_bar = rng.standard_normal((d, w))
    A, B = rng.standard_normal((2, d, d, w))
    np.testing.assert_allclose(predict_step(W_bar, A), brute_force_predict(W_bar, A), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(
        predict_step(W_bar, alpha * A + beta * B),
        alpha * predict_step(W_bar, A) + beta * predict_step(W_bar, B), rtol=1e-9, atol=1e-9)


def test_predict_uses_every_window():
    W, params = random_problem(2, d=3, tau_bar=2, T=11)
    pred = predict(W, params)
    S = time_invariance_forward(W, params)
    assert pred.shape == (3, W.c)
    for p in range(W.c):
        W_bar = mechanism_forward(W.windows[:, :, p], params)
        np.testing.assert_allclose(pred[:, p], brute_force_predict(W_bar, S.effects), rtol=1e-12, atol=1e-14)


def test_loss_examples():
    X = TimeSeriesDataset(np.array([[0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 0.0, 5.0]]))
    assert loss(X, X.values[:, 2:]) == 0.0
    pred = X.values[:, 2:].copy()
    pred[1, 1] -= 2.0
    assert loss(X, pred) == 4.0
    rng = np.random.default_rng(3)
    X = TimeSeriesDataset(rng.standard_normal((2, 5)))
    P = rng.standard_normal((2, 3))
    expected = sum((X.values[i, 2 + t] - P[i, t]) ** 2 for i in range(2) for t in range(3))
    assert loss(X, P) == pytest.approx(expected, rel=1e-14)


def test_tape_loss_equals_direct_loss():
    W, params = random_problem(9, d=3, tau_bar=2, T=12, n_kernels=2)
    tape = build_loss_tape(W, params)
    pred = predict(W, params)
    direct = float(np.sum((W.targets - pred) ** 2))
    assert tape.value == pytest.approx(direct, rel=1e-12)
    np.testing.assert_allclose(effects_from_tape(tape), time_invariance_forward(W, params).effects, rtol=1e-12)


def test_shape_mismatch_between_windows_and_params():
    W, _ = random_problem(0, d=2, tau_bar=1, T=8)
    params = ModelParams.initialize(3, 2, seed=0)
    with pytest.raises(ShapeError):
        time_invariance_forward(W, params)


def test_score_tensor_validates_shape():
    with pytest.raises(ShapeError):
        CausalScoreTensor(np.zeros((2, 3, 2)))
