import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pgff import kernels
from pgff.checks import central_difference, gradient_relative_error
from pgff.neuralnet import (
    Network,
    backward,
    collapse_affine,
    ramp_family_network,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    zero_network,
)
from pgff.signals import Trajectory
from pgff.linmodel import build_regressor


def scalar_forward(net, x):
    """Plain-Python evaluation of one input row."""
    a = [float(v) for v in x]
    n_layers = len(net.weights)
    for l, W in enumerate(net.weights):
        z = [sum(float(W[o, i]) * a[i] for i in range(W.shape[1])) for o in range(W.shape[0])]
        if l < n_layers - 1:
            z = [zi + float(net.biases[l][o]) for o, zi in enumerate(z)]
            if net.activation == "tanh":
                z = [math.tanh(zi) for zi in z]
            elif net.activation == "relu":
                z = [max(zi, 0.0) for zi in z]
        a = z
    return a[0]


def random_net(rng, sizes=(3, 5, 5, 1), activation="tanh"):
    net = init_network(sizes, activation, rng)
    return net.with_params(net.flatten() + 0.2 * rng.standard_normal(net.n_params))


def test_structure_validation():
    with pytest.raises(ValueError):
        Network([np.ones((2, 3)), np.ones((2, 2))], [np.zeros(2)])  # two output rows
    with pytest.raises(ValueError):
        Network([np.ones((2, 3)), np.ones((1, 2))], [np.zeros(2), np.zeros(1)])  # output bias
    with pytest.raises(ValueError):
        Network([np.ones((2, 3)), np.ones((1, 4))], [np.zeros(2)])  # width mismatch
    with pytest.raises(ValueError):
        Network([np.ones((1, 3))], [], "sigmoid")


def test_zero_network_outputs_zero(rng):
    net = zero_network([3, 5, 5, 1])
    assert np.all(forward(net, rng.standard_normal((20, 3))) == 0.0)


def test_single_linear_layer(rng):
    W = rng.standard_normal((1, 3))
    X = rng.standard_normal((10, 3))
    net = Network([W], [], "identity")
    assert np.allclose(forward(net, X), X @ W[0], rtol=1e-14)


def test_input_width_checked(rng):
    with pytest.raises(ValueError):
        forward(random_net(rng), np.ones((4, 2)))


@pytest.mark.parametrize("activation", ["tanh", "relu", "identity"])
def test_forward_matches_scalar_loop(rng, activation):
    net = random_net(rng, activation=activation)
    X = rng.standard_normal((40, 3)) * 2
    expected = [scalar_forward(net, x) for x in X]
    assert np.allclose(forward(net, X), expected, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("activation", ["tanh", "relu", "identity"])
def test_compiled_loops_match_numpy(rng, activation):
    net = random_net(rng, (3, 4, 6, 1), activation)
    X = rng.standard_normal((30, 3))
    cot = rng.standard_normal(30)
    p, sz, act = net.flatten(), net.sizes, {"identity": 0, "tanh": 1, "relu": 2}[activation]
    assert np.allclose(kernels.mlp_forward_compiled(p, sz, act, X), kernels.mlp_forward_np(p, sz, act, X),
                       rtol=1e-13, atol=1e-14)
    out_c, g_c = kernels.mlp_vjp_compiled(p, sz, act, X, cot)
    out_n, g_n = kernels.mlp_vjp_np(p, sz, act, X, cot)
    assert np.allclose(out_c, out_n, rtol=1e-13, atol=1e-14)
    assert np.allclose(g_c, g_n, rtol=1e-12, atol=1e-13)


def test_forward_is_deterministic(rng):
    net = random_net(rng)
    X = rng.standard_normal((50, 3))
    assert np.array_equal(forward(net, X), forward(net, X))


def test_zero_cotangent_zero_gradient(rng):
    net = random_net(rng)
    g = backward(net, rng.standard_normal((10, 3)), np.zeros(10))
    assert all(np.all(W == 0) for W in g.weights) and all(np.all(b == 0) for b in g.biases)


def test_cotangent_shape_checked(rng):
    with pytest.raises(ValueError):
        backward(random_net(rng), np.ones((5, 3)), np.ones(4))


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_backward_matches_finite_differences(activation):
    r = np.random.default_rng(7)
    net = random_net(r, activation=activation)
    X = r.standard_normal((25, 3))
    cot = r.standard_normal(25)
    if activation == "relu":
        # keep every pre-activation at least 1e-3 away from the kink
        for _ in range(200):
            Ws, bs = net.weights, net.biases
            z0 = X @ Ws[0].T + bs[0]
            z1 = np.maximum(z0, 0) @ Ws[1].T + bs[1]
            if min(np.abs(z0).min(), np.abs(z1).min()) >= 1e-3:
                break
            X = r.standard_normal((25, 3))
        else:
            pytest.fail("could not draw inputs away from the ReLU kink")
    g = backward(net, X, cot)
    flat_g = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(g.weights[:-1], g.biases)]
                            + [g.weights[-1].ravel()])

    def f(p):
        return float(cot @ forward(net.with_params(p), X))

    fd = central_difference(f, net.flatten(), 1e-6)
    assert gradient_relative_error(flat_g, fd) <= 1e-5


def test_identity_output_layer_gradient(rng):
    net = random_net(rng, (3, 4, 1), "identity")
    X = rng.standard_normal((12, 3))
    cot = rng.standard_normal(12)
    hidden = X @ net.weights[0].T + net.biases[0]
    g = backward(net, X, cot)
    assert np.allclose(g.weights[-1].ravel(), cot @ hidden, rtol=1e-12)


def test_collapse_single_layer(rng):
    W = rng.standard_normal((1, 3))
    Wc, b = collapse_affine(Network([W], [], "identity"))
    assert np.array_equal(Wc, W.ravel()) and b == 0.0


def test_collapse_two_layers_by_hand():
    W0 = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]])
    b0 = np.array([0.5, -2.0])
    W1 = np.array([[2.0, 1.0]])
    W, b = collapse_affine(Network([W0, W1], [b0], "identity"))
    # W1 W0 = [2, 3, 3]; W1 b0 = 1 - 2 = -1
    assert W.tolist() == [2.0, 3.0, 3.0] and b == -1.0


def test_collapse_three_layers_random(rng):
    net = random_net(rng, (3, 4, 2, 1), "identity")
    W, b = collapse_affine(net)
    X = rng.standard_normal((100, 3))
    assert np.max(np.abs(forward(net, X) - (X @ W + b))) <= 1e-10


def test_collapse_rejects_nonlinear(rng):
    with pytest.raises(ValueError):
        collapse_affine(random_net(rng))


@given(st.integers(0, 10_000))
def test_equal_sum_tuples_give_equal_outputs(seed):
    r = np.random.default_rng(seed)
    net_a = random_net(r, (3, 4, 1), "identity")
    W_a, b_a = collapse_affine(net_a)
    theta_a = r.standard_normal(3)
    # shift the first layer along a direction the output layer sees with unit gain
    u = net_a.weights[1].ravel() / (net_a.weights[1].ravel() @ net_a.weights[1].ravel())
    shift = r.standard_normal(3)
    net_b = Network([net_a.weights[0] + np.outer(u, shift), net_a.weights[1]], net_a.biases, "identity")
    W_b, b_b = collapse_affine(net_b)
    theta_b = theta_a + W_a - W_b
    assert np.allclose(theta_a + W_a, theta_b + W_b, atol=1e-12) and b_a == pytest.approx(b_b, abs=1e-12)
    X = r.standard_normal((50, 3))
    assert np.max(np.abs(X @ theta_a + forward(net_a, X) - X @ theta_b - forward(net_b, X))) <= 1e-10


def test_ramp_family_network_construction():
    theta, net = ramp_family_network(0.0, 2.0)
    X = np.abs(np.random.default_rng(0).standard_normal((10, 2))) + 0.1
    assert np.all(forward(net, X) == 0.0)
    assert theta.theta.tolist() == [2.0, 0.0]
    assert net.weights[0].tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_ramp_family_outputs_equal_thetas_differ():
    ref = Trajectory(np.arange(1, 41) / 100.0)
    M = build_regressor(ref, 2)
    outs, thetas = [], []
    for c1 in (-3.0, 4.5):
        theta, net = ramp_family_network(c1, 1.5)
        outs.append(M @ theta.theta + forward(net, M))
        thetas.append(theta.theta)
    assert np.allclose(outs[0], outs[1], atol=1e-12)
    assert not np.allclose(thetas[0], thetas[1])


def test_glorot_init_bounds_and_seeding():
    a = init_network([3, 5, 5, 1], "tanh", 4)
    b = init_network([3, 5, 5, 1], "tanh", 4)
    assert np.array_equal(a.flatten(), b.flatten())
    for W in a.weights:
        limit = np.sqrt(6.0 / sum(W.shape))
        assert np.all(np.abs(W) <= limit)
    assert all(np.all(bias == 0) for bias in a.biases)
    assert not np.array_equal(a.flatten(), init_network([3, 5, 5, 1], "tanh", 5).flatten())


def test_init_requires_scalar_output():
    with pytest.raises(ValueError):
        init_network([3, 5, 2])


def test_params_round_trip(rng):
    net = random_net(rng)
    p = net.flatten()
    assert np.array_equal(net.with_params(p).flatten(), p)
    with pytest.raises(ValueError):
        net.with_params(p[:-1])


def test_checkpoint_round_trip(tmp_path, rng):
    net = random_net(rng)
    path = save_checkpoint(net, tmp_path / "net.json")
    d = json.loads(path.read_text())
    assert d["activation"] == "tanh" and d["shapes"] == [[5, 3], [5, 5], [1, 5]]
    back = load_checkpoint(path)
    assert np.array_equal(back.flatten(), net.flatten()) and back.activation == "tanh"
