import numpy as np
import pytest

from starswipt.nets import Mlp, sigmoid, softplus


def numeric_grad_theta(net, x, loss, eps=1e-6):
    grad = np.zeros(net.n_params)
    for i in range(net.n_params):
        net.theta[i] += eps
        hi = loss(net.forward(x))
        net.theta[i] -= 2 * eps
        lo = loss(net.forward(x))
        net.theta[i] += eps
        grad[i] = (hi - lo) / (2 * eps)
    return grad


@pytest.mark.parametrize("out_act", ["linear", "tanh"])
def test_backward_matches_finite_differences(out_act):
    rng = np.random.default_rng(0)
    net = Mlp((4, 6, 3), out_act=out_act, rng=rng)
    x = rng.standard_normal((5, 4))
    target = rng.standard_normal((5, 3))

    def loss(y):
        return float(np.mean((y - target) ** 2))

    y, cache = net.forward_cache(x)
    grad_out = 2.0 * (y - target) / y.size
    grad_theta, grad_x = net.backward(cache, grad_out)
    np.testing.assert_allclose(grad_theta, numeric_grad_theta(net, x, loss),
                               rtol=1e-5, atol=1e-9)
    # input gradient against finite differences too
    eps = 1e-6
    fd_x = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        x[idx] += eps
        hi = loss(net.forward(x))
        x[idx] -= 2 * eps
        lo = loss(net.forward(x))
        x[idx] += eps
        fd_x[idx] = (hi - lo) / (2 * eps)
    np.testing.assert_allclose(grad_x, fd_x, rtol=1e-5, atol=1e-9)


def test_axpy_and_views_alias():
    net = Mlp((2, 3, 1), rng=np.random.default_rng(1))
    before = net.forward([[1.0, 2.0]]).copy()
    net.axpy(0.1, np.ones(net.n_params))
    after = net.forward([[1.0, 2.0]])
    assert not np.allclose(before, after)


def test_copy_is_independent():
    net = Mlp((2, 4, 2), rng=np.random.default_rng(2))
    clone = net.copy()
    clone.axpy(1.0, np.ones(clone.n_params))
    x = [[0.3, -0.7]]
    assert not np.allclose(net.forward(x), clone.forward(x))
    # source unchanged by the clone update
    net2 = Mlp((2, 4, 2), rng=np.random.default_rng(2))
    np.testing.assert_array_equal(net.theta, net2.theta)


def test_descriptor_round_trip():
    net = Mlp((3, 5, 2), out_act="tanh", rng=np.random.default_rng(3))
    clone = Mlp.from_descriptor(net.descriptor(), theta=net.theta)
    x = np.random.default_rng(4).standard_normal((2, 3))
    np.testing.assert_array_equal(net.forward(x), clone.forward(x))


def test_param_count_fixed_by_descriptor():
    net = Mlp((7, 16, 16, 5))
    assert net.n_params == (7 + 1) * 16 + (16 + 1) * 16 + (16 + 1) * 5


def test_activation_helpers():
    x = np.linspace(-20, 20, 41)
    stable = np.where(x > 0, x + np.log1p(np.exp(-x)), np.log1p(np.exp(x)))
    np.testing.assert_allclose(softplus(x), stable, rtol=1e-12)
    np.testing.assert_allclose(sigmoid(x), 1 / (1 + np.exp(-x)), rtol=1e-7)


def test_deterministic_init():
    a = Mlp((4, 8, 2), rng=np.random.default_rng(9))
    b = Mlp((4, 8, 2), rng=np.random.default_rng(9))
    np.testing.assert_array_equal(a.theta, b.theta)
