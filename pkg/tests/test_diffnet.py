import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dftk.diffnet import (AdamState, MlpParams, NonFiniteGradientError, TapeConsumedError,
                          adam_step, backward, mlp_forward, siren_init)


def _fd_param_grads(params, x, adj, h=1e-5):
    vec = params.to_vector()
    out = np.empty_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        fp, _ = mlp_forward(params.with_vector(vec + e), x)
        fm, _ = mlp_forward(params.with_vector(vec - e), x)
        out[i] = np.sum(adj * (fp - fm)) / (2 * h)
    return out


def test_init_deterministic_and_bounded():
    a = siren_init([3, 16, 16, 4], 30.0, np.random.default_rng(1))
    b = siren_init([3, 16, 16, 4], 30.0, np.random.default_rng(1))
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert np.max(np.abs(a.weights[0])) <= 1 / 3
    for w in a.weights[1:]:
        assert np.max(np.abs(w)) <= math.sqrt(6 / w.shape[1])
    for b_, w in zip(a.biases, a.weights):
        assert np.max(np.abs(b_)) <= 1 / math.sqrt(w.shape[1])


def test_forward_output_scale():
    p = siren_init([2, 64, 64, 64, 1], 30.0, np.random.default_rng(2))
    out, _ = mlp_forward(p, np.random.default_rng(3).uniform(-1, 1, (1000, 2)))
    assert 0.1 <= out.std() <= 2


def test_zero_network_outputs_final_bias():
    p = siren_init([2, 8, 3], 30.0, np.random.default_rng(0)).zeros_like()
    p.biases[-1][:] = [1.0, -2.0, 0.5]
    out, _ = mlp_forward(p, np.ones((4, 2)))
    assert np.array_equal(out, np.tile([1.0, -2.0, 0.5], (4, 1)))


def test_output_layer_linearity(rng):
    p = siren_init([2, 8, 8, 3], 10.0, rng)
    x = rng.uniform(-1, 1, (5, 2))
    q = MlpParams([w.copy() for w in p.weights], [b.copy() for b in p.biases], p.omegas)
    q.weights[-1] *= 2
    q.biases[-1] *= 2
    assert np.allclose(mlp_forward(q, x)[0], 2 * mlp_forward(p, x)[0], rtol=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_parameter_gradients_match_finite_differences(seed):
    r = np.random.default_rng(seed)
    p = siren_init([2, 6, 5, 3], 3.0, r)
    x = r.uniform(-1, 1, (4, 2))
    adj = r.standard_normal((4, 3))
    _, tape = mlp_forward(p, x)
    g, _ = backward(tape, adj)
    fd = _fd_param_grads(p, x, adj)
    assert np.max(np.abs(g.to_vector() - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_input_gradient_matches_finite_differences(rng):
    p = siren_init([3, 8, 8, 2], 5.0, rng)
    x = rng.uniform(-1, 1, (3, 3))
    adj = rng.standard_normal((3, 2))
    _, tape = mlp_forward(p, x)
    _, gx = backward(tape, adj)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = np.sum(adj * (mlp_forward(p, x + e)[0] - mlp_forward(p, x - e)[0]), axis=1) / (2 * h)
        assert np.allclose(gx[:, k], fd, rtol=1e-5, atol=1e-8)


def test_zero_adjoint_gives_zero_gradients(rng):
    p = siren_init([2, 5, 2], 30.0, rng)
    _, tape = mlp_forward(p, rng.standard_normal((3, 2)))
    g, gx = backward(tape, np.zeros((3, 2)))
    assert not np.any(g.to_vector()) and not np.any(gx)


def test_linear_network_input_gradient(rng):
    W = rng.standard_normal((3, 4))
    p = MlpParams([W], [np.zeros(3)], [])
    _, tape = mlp_forward(p, rng.standard_normal(4))
    adj = rng.standard_normal(3)
    _, gx = backward(tape, adj)
    assert np.array_equal(gx, W.T @ adj)


def test_tape_single_use(rng):
    p = siren_init([2, 4, 1], 30.0, rng)
    _, tape = mlp_forward(p, np.zeros((1, 2)))
    backward(tape, np.ones((1, 1)))
    with pytest.raises(TapeConsumedError):
        backward(tape, np.ones((1, 1)))


def test_input_width_checked(rng):
    with pytest.raises(ValueError):
        mlp_forward(siren_init([2, 4, 1], 30.0, rng), np.zeros((1, 3)))


def test_adam_first_step_closed_form():
    g = np.array([0.5, -2.0, 1e-3, 0.0])
    st0 = AdamState.fresh(4, lr=0.01)
    new, st1 = adam_step(np.zeros(4), g, st0)
    assert np.allclose(new, -0.01 * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-16)
    assert st1.t == 1


def test_adam_zero_gradient_keeps_parameters():
    theta = np.array([1.0, 2.0])
    new, st1 = adam_step(theta, np.zeros(2), AdamState.fresh(2))
    assert np.array_equal(new, theta) and st1.t == 1


def test_adam_two_steps_hand_unrolled():
    g = np.array([0.3, -1.1])
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    theta, st_ = np.array([0.2, 0.4]), AdamState.fresh(2, lr=lr)
    for _ in range(2):
        theta, st_ = adam_step(theta, g, st_)
    m1, v1 = (1 - b1) * g, (1 - b2) * g ** 2
    t1 = np.array([0.2, 0.4]) - lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2, v2 = b1 * m1 + (1 - b1) * g, b2 * v1 + (1 - b2) * g ** 2
    t2 = t1 - lr * (m2 / (1 - b1 ** 2)) / (np.sqrt(v2 / (1 - b2 ** 2)) + eps)
    assert np.allclose(theta, t2, rtol=0, atol=1e-12)


def test_adam_rejects_nonfinite():
    with pytest.raises(NonFiniteGradientError):
        adam_step(np.zeros(2), np.array([np.nan, 0.0]), AdamState.fresh(2))
