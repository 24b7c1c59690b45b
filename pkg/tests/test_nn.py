import numpy as np
import pytest

from egn.nn import MlpSpec, forward, forward_and_jacobian, init_params, stacked_jacobian

from oracles import fd_jacobian, naive_forward, random_relu_net


def test_param_count_two_widths():
    assert MlpSpec((2, 1)).n_params == 3


def test_param_count_formula():
    # d = sum over layers of in*out + out
    assert MlpSpec((8, 32, 64, 32, 1)).n_params == 4513
    # the published 4449-parameter three-hidden-layer net has 6 inputs
    assert MlpSpec((6, 32, 64, 32, 1)).n_params == 4449


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((3,))
    with pytest.raises(ValueError):
        MlpSpec((3, 0, 1))
    with pytest.raises(ValueError):
        MlpSpec((3, 2), activations=("relu",) * 3)
    with pytest.raises(ValueError):
        MlpSpec((3, 2), activations=("tanh",))


def test_init_deterministic():
    spec = MlpSpec((8, 32, 64, 32, 1))
    w1 = init_params(spec, seed=7)
    w2 = init_params(spec, seed=7)
    assert w1.shape == (4513,)
    assert np.array_equal(w1, w2)
    assert not np.array_equal(w1, init_params(spec, seed=8))


def test_init_scale_and_zero_biases():
    spec = MlpSpec((100, 50, 1))
    w = init_params(spec, seed=0)
    W1 = w[:5000]
    b1 = w[5000:5050]
    assert np.all(b1 == 0.0)
    assert np.max(np.abs(W1)) <= 1.0 / np.sqrt(100)
    assert abs(W1.mean()) < 0.01


def test_forward_identity_single_layer():
    spec = MlpSpec((2, 2), activations=("identity",))
    w = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])  # W = I, bias = 0
    out = forward(spec, w, np.array([[3.0, 4.0]]))
    assert np.array_equal(out, [[3.0, 4.0]])


def test_forward_relu_clamps():
    spec = MlpSpec((1, 1), activations=("relu",))
    w = np.array([1.0, -2.0])
    out = forward(spec, w, np.array([[1.0]]))
    assert np.array_equal(out, [[0.0]])


def test_forward_shape_mismatch():
    spec = MlpSpec((3, 1))
    w = init_params(spec, 0)
    with pytest.raises(ValueError):
        forward(spec, w, np.zeros((4, 2)))


def test_forward_matches_naive_loop():
    rng = np.random.default_rng(42)
    for _ in range(20):
        widths, acts, w = random_relu_net(rng)
        spec = MlpSpec(widths, activations=acts)
        X = rng.standard_normal((5, widths[0]))
        out = forward(spec, w, X)
        for i in range(5):
            ref = naive_forward(widths, acts, w, X[i])
            np.testing.assert_allclose(out[i], ref, rtol=1e-12, atol=1e-12)


def test_jacobian_linear_model():
    # one-layer identity net: phi(x; w) = w1*x + w2, so the row is [x, 1]
    spec = MlpSpec((1, 1), activations=("identity",))
    w = np.array([2.0, -1.0])
    J = stacked_jacobian(spec, w, np.array([[3.0], [5.0]]))
    assert np.array_equal(J, [[3.0, 1.0], [5.0, 1.0]])


def test_jacobian_shape_contract():
    spec = MlpSpec((4, 6, 3))
    w = init_params(spec, 1)
    J = stacked_jacobian(spec, w, np.zeros((7, 4)))
    assert J.shape == (7 * 3, spec.n_params)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 50:
        widths, acts, w = random_relu_net(rng)
        spec = MlpSpec(widths, activations=acts)
        X = rng.standard_normal((3, widths[0]))
        J = stacked_jacobian(spec, w, X)
        c = widths[-1]
        for i in range(3):
            J_fd = fd_jacobian(lambda v: forward(spec, v, X[i : i + 1])[0], w, c)
            err = np.max(np.abs(J_fd - J[i * c : (i + 1) * c]))
            assert err / (1.0 + np.max(np.abs(J))) <= 1e-5
        checked += 1


def test_jacobian_constant_for_affine_net():
    # with identity activations everywhere the map is affine in w per layer,
    # but a one-layer net is exactly linear: J must not depend on w
    rng = np.random.default_rng(9)
    spec = MlpSpec((4, 3), activations=("identity",))
    X = rng.standard_normal((6, 4))
    J1 = stacked_jacobian(spec, rng.standard_normal(spec.n_params), X)
    J2 = stacked_jacobian(spec, rng.standard_normal(spec.n_params), X)
    np.testing.assert_array_equal(J1, J2)


def test_forward_and_jacobian_consistent():
    rng = np.random.default_rng(11)
    spec = MlpSpec((5, 8, 3))
    w = init_params(spec, 2)
    X = rng.standard_normal((4, 5))
    out, J = forward_and_jacobian(spec, w, X)
    np.testing.assert_array_equal(out, forward(spec, w, X))
    np.testing.assert_array_equal(J, stacked_jacobian(spec, w, X))


def test_bitwise_determinism():
    rng = np.random.default_rng(13)
    spec = MlpSpec((6, 10, 4))
    w = init_params(spec, 3)
    X = rng.standard_normal((8, 6))
    a = forward_and_jacobian(spec, w, X)
    b = forward_and_jacobian(spec, w, X)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
