"""Unit tests for the MLP numerics: forward, losses, Adam, flatten round-trip."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import central_difference_grad, loss_over_params, random_small_mlp, relative_error
from takfed import (
    AdamState,
    MlpArchitecture,
    ParameterVector,
    adam_init,
    adam_step,
    backward,
    cross_entropy,
    flatten,
    forward,
    forward_cached,
    init_params,
    kd_kl_loss,
    softmax_t,
    stream,
    unflatten,
)


# --- architecture / parameters ----------------------------------------------


def test_parameter_count_logistic_regression():
    # no hidden layers: input_dim*classes weights + classes biases
    arch = MlpArchitecture(7, (), 4)
    assert arch.parameter_count() == 7 * 4 + 4
    vec = init_params(arch, stream(3, "init"))
    assert len(vec) == arch.parameter_count()


def test_init_deterministic_per_seed():
    arch = MlpArchitecture(5, (6,), 3)
    a = init_params(arch, stream(11, "init", "P"))
    b = init_params(arch, stream(11, "init", "P"))
    assert np.array_equal(a.values, b.values)
    c = init_params(arch, stream(12, "init", "P"))
    assert not np.array_equal(a.values, c.values)


def test_init_glorot_bounds_and_zero_biases():
    arch = MlpArchitecture(4, (10,), 3)
    vec = init_params(arch, stream(0, "init"))
    for w, b in unflatten(arch, vec.values):
        limit = math.sqrt(6.0 / sum(w.shape))
        assert np.all(np.abs(w) <= limit)
        assert np.all(b == 0.0)


def test_flatten_unflatten_roundtrip_bit_identical():
    arch = MlpArchitecture(6, (5, 4), 3)
    vec = init_params(arch, stream(2, "init"))
    rebuilt = flatten(unflatten(arch, vec.values))
    assert rebuilt.tobytes() == vec.values.tobytes()


@given(st.integers(1, 8), st.integers(2, 6), st.integers(0, 2), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_flatten_roundtrip_property(input_dim, classes, n_hidden, seed):
    arch = MlpArchitecture(input_dim, (3,) * n_hidden, classes)
    values = stream(seed, "prop").normal(size=arch.parameter_count())
    assert flatten(unflatten(arch, values)).tobytes() == values.tobytes()


def test_invalid_architectures_rejected():
    with pytest.raises(ValueError):
        MlpArchitecture(0, (), 3)
    with pytest.raises(ValueError):
        MlpArchitecture(4, (), 1)
    with pytest.raises(ValueError):
        MlpArchitecture(4, (0,), 3)
    with pytest.raises(ValueError):
        MlpArchitecture(4, (), 3, activation="tanh")


# --- forward ------------------------------------------------------------------


def test_forward_zero_params_zero_logits():
    arch = MlpArchitecture(3, (4,), 2)
    zero = ParameterVector(np.zeros(arch.parameter_count()), arch.arch_id)
    out = forward(arch, zero, np.random.default_rng(0).normal(size=(6, 3)))
    assert np.all(out == 0.0)


def test_forward_identity_single_layer():
    arch = MlpArchitecture(2, (), 2)
    values = np.zeros(arch.parameter_count())
    w, b = unflatten(arch, values)[0]
    w[...] = np.eye(2)
    pv = ParameterVector(values, arch.arch_id)
    out = forward(arch, pv, np.array([[1.0, 2.0]]))
    assert np.array_equal(out, np.array([[1.0, 2.0]]))


def test_forward_matches_straight_line_oracle():
    # independent reimplementation: explicit per-layer matmul + relu
    arch = MlpArchitecture(5, (7, 6), 4)
    params = init_params(arch, stream(9, "init"))
    x = stream(9, "batch").normal(size=(8, 5))
    (w0, b0), (w1, b1), (w2, b2) = unflatten(arch, params.values)
    h0 = np.maximum(x @ w0 + b0, 0.0)
    h1 = np.maximum(h0 @ w1 + b1, 0.0)
    expected = h1 @ w2 + b2
    got = forward(arch, params, x)
    assert np.max(np.abs(got - expected)) < 1e-12


def test_forward_shape_error_names_dimension():
    arch = MlpArchitecture(4, (), 2)
    pv = init_params(arch, stream(1, "init"))
    with pytest.raises(ValueError, match="width 3.*input_dim 4"):
        forward(arch, pv, np.zeros((2, 3)))


# --- softmax ------------------------------------------------------------------


def test_softmax_symmetry_and_high_temperature():
    assert np.allclose(softmax_t(np.array([0.0, 0.0]), 3.0), [0.5, 0.5], atol=1e-15)
    assert np.allclose(softmax_t(np.array([1.0, 0.0]), 1e6), [0.5, 0.5], atol=1e-6)


def test_softmax_frozen_value():
    # e^2 / (e^2 + 1) = 0.88079707797788244 (arbitrary-precision evaluation)
    p = softmax_t(np.array([2.0, 0.0]), 1.0)
    assert abs(p[0] - 0.88080) < 1e-5
    assert abs(p[0] - 0.8807970779778824) < 1e-12
    assert abs(p[1] - 0.11920) < 1e-5


def test_softmax_temperature_domain_error():
    with pytest.raises(ValueError, match="temperature"):
        softmax_t(np.array([1.0, 0.0]), 0.0)
    with pytest.raises(ValueError, match="temperature"):
        softmax_t(np.array([1.0, 0.0]), -2.0)


@given(
    st.lists(st.floats(min_value=-1e4, max_value=1e4), min_size=2, max_size=8),
    st.floats(min_value=1e-2, max_value=1e3),
)
@settings(max_examples=200, deadline=None)
def test_softmax_sums_to_one_and_preserves_argmax(logits, temperature):
    z = np.array(logits)
    p = softmax_t(z, temperature)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p >= 0.0) and np.all(p <= 1.0 + 1e-15)
    if (z.max() - z.min()) / temperature < 700.0:
        # entries only leave the open interval when exp underflows
        assert np.all(p > 0.0)
    top, runner_up = np.sort(z)[-1], np.sort(z)[-2]
    if (top - runner_up) / temperature > 1e-9:
        # ranking is preserved whenever the top gap survives float resolution
        assert np.argmax(p) == np.argmax(z)


# --- cross entropy -------------------------------------------------------------


def test_cross_entropy_uniform_prediction():
    for classes in (2, 5, 10):
        logits = np.zeros((3, classes))
        loss, _ = cross_entropy(logits, np.zeros(3, dtype=int))
        assert abs(loss - math.log(classes)) < 1e-12


def test_cross_entropy_confident_correct():
    logits = np.zeros((1, 4))
    logits[0, 2] = 1e3
    loss, _ = cross_entropy(logits, np.array([2]))
    assert loss < 1e-6


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError, match="labels"):
        cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
    with pytest.raises(ValueError, match="labels"):
        cross_entropy(np.zeros((2, 3)), np.array([-1, 0]))


def test_cross_entropy_grad_matches_finite_differences():
    rng = np.random.default_rng(42)
    logits = rng.normal(size=(6, 4))
    labels = rng.integers(0, 4, size=6)
    _, grad = cross_entropy(logits, labels)

    def at(flat):
        return cross_entropy(flat.reshape(6, 4), labels)[0]

    fd = central_difference_grad(at, logits.ravel()).reshape(6, 4)
    assert relative_error(grad, fd) < 1e-6


# --- KD KL loss -----------------------------------------------------------------


def test_kd_identical_distributions():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(4, 5))
    for temp in (1.0, 3.0, 20.0):
        loss, grad = kd_kl_loss(logits, logits, temp)
        assert loss == 0.0
        assert np.all(grad == 0.0)


def test_kd_frozen_value():
    # closed form (p1 - p2) with p1 = e/(1+e): 0.46211715726000976
    loss, _ = kd_kl_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), 1.0)
    assert abs(loss - 0.46212) < 1e-5
    assert abs(loss - 0.4621171572600098) < 1e-12


def test_kd_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        kd_kl_loss(np.zeros((2, 3)), np.zeros((2, 4)), 1.0)


def test_kd_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    teacher = rng.normal(size=(5, 4))
    student = rng.normal(size=(5, 4))
    for temp in (1.0, 3.0, 20.0):
        _, grad = kd_kl_loss(teacher, student, temp)

        def at(flat, t=temp):
            return kd_kl_loss(teacher, flat.reshape(5, 4), t)[0]

        fd = central_difference_grad(at, student.ravel()).reshape(5, 4)
        assert relative_error(grad, fd) < 1e-6


@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 3.0, 20.0]))
@settings(max_examples=25, deadline=None)
def test_kd_nonnegative_property(seed, temp):
    rng = np.random.default_rng(seed)
    loss, _ = kd_kl_loss(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), temp)
    assert loss >= 0.0


# --- network-level gradients -----------------------------------------------------


def test_network_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    for _ in range(5):
        arch, params, x = random_small_mlp(rng)
        labels = rng.integers(0, arch.num_classes, size=x.shape[0])
        teacher = rng.normal(size=(x.shape[0], arch.num_classes))

        logits, cache = forward_cached(arch, params, x)
        _, g_ce = cross_entropy(logits, labels)
        analytic = backward(arch, params, cache, g_ce)
        fd = central_difference_grad(
            loss_over_params(arch, lambda lg: cross_entropy(lg, labels)[0], x), params.values
        )
        assert relative_error(analytic, fd) < 1e-5

        _, g_kd = kd_kl_loss(teacher, logits, 3.0)
        analytic_kd = backward(arch, params, cache, g_kd)
        fd_kd = central_difference_grad(
            loss_over_params(arch, lambda lg: kd_kl_loss(teacher, lg, 3.0)[0], x), params.values
        )
        assert relative_error(analytic_kd, fd_kd) < 1e-5


# --- adam -------------------------------------------------------------------------


def test_adam_zero_grads_fixed_point():
    state = adam_init(3, lr=0.1, weight_decay=0.0)
    params = np.array([1.0, -2.0, 0.5])
    new, state2 = adam_step(state, params, np.zeros(3))
    assert np.array_equal(new, params)
    assert state2.t == 1


def test_adam_first_step_closed_form():
    # theta' = -lr * g / (|g| + eps) = -0.09999999950000001
    state = adam_init(1, lr=0.1, weight_decay=0.0)
    new, _ = adam_step(state, np.array([0.0]), np.array([2.0]))
    assert abs(new[0] - (-0.1)) < 1e-6
    assert abs(new[0] - (-0.09999999950000001)) < 1e-15


def test_adam_five_steps_match_independent_scalar_oracle():
    # scalar quadratic f(t) = t^2, grad 2t, from t = 1; plain-python Adam
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    t_ref, m, v = 1.0, 0.0, 0.0
    for step in range(1, 6):
        g = 2.0 * t_ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        t_ref = t_ref - lr * (m_hat / (math.sqrt(v_hat) + eps))

    state = adam_init(1, lr=lr, weight_decay=0.0)
    theta = np.array([1.0])
    for _ in range(5):
        theta, state = adam_step(state, theta, 2.0 * theta)
    assert theta[0] == t_ref


def test_adam_decoupled_weight_decay():
    state = adam_init(1, lr=0.1, weight_decay=0.5)
    new, _ = adam_step(state, np.array([2.0]), np.array([0.0]))
    # zero gradient: only the decay term moves the parameter, by lr*wd*theta
    assert abs(new[0] - (2.0 - 0.1 * 0.5 * 2.0)) < 1e-15


def test_adam_shape_mismatch():
    state = adam_init(2, lr=0.1)
    with pytest.raises(ValueError, match="shape"):
        adam_step(state, np.zeros(3), np.zeros(3))
