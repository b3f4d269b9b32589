import numpy as np
import pytest

from protofuse.autodiff import (
    Tensor,
    backward,
    concat,
    cosine_rows,
    cross_entropy_rows,
    kl_rows,
    no_grad,
    softmax_rows,
)
from protofuse.errors import InvalidArgumentError, NonFiniteError


def numeric_grad(fn, x, step=1e-6):
    """Central differences of a scalar function of one numpy array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return g


def check_op(build, shape, seed=0, step=1e-6, tol=1e-6):
    """Compare analytic and numeric gradients for a scalar-valued op chain."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape)
    t = Tensor(x.copy(), requires_grad=True)
    loss = build(t)
    backward(loss)

    def value(arr):
        with no_grad():
            return build(Tensor(arr)).item()

    expected = numeric_grad(value, x.copy(), step)
    np.testing.assert_allclose(t.grad, expected, atol=tol, rtol=tol)


def test_square_gradient():
    w = Tensor([3.0], requires_grad=True)
    backward((w * w).sum())
    np.testing.assert_allclose(w.grad, [6.0])


@pytest.mark.parametrize(
    "name,build,shape",
    [
        ("add", lambda t: (t + 2.0).sum(), (3, 4)),
        ("mul", lambda t: (t * t * 0.5).sum(), (3, 4)),
        ("div", lambda t: (t / (t * t + 3.0)).sum(), (4,)),
        ("matmul", lambda t: (t @ t.transpose()).sum(), (3, 3)),
        ("pow", lambda t: ((t * t + 1.0) ** 0.5).sum(), (5,)),
        ("tanh", lambda t: t.tanh().sum(), (3, 4)),
        ("sigmoid", lambda t: t.sigmoid().sum(), (6,)),
        ("exp", lambda t: t.exp().sum(), (3, 2)),
        ("log", lambda t: (t * t + 0.5).log().sum(), (4,)),
        ("mean0", lambda t: (t.mean(axis=0) ** 2.0).sum(), (4, 3)),
        ("mean_all", lambda t: (t.mean() * t.mean()).sum(), (4, 3)),
        ("sum_keepdims", lambda t: (t / t.sum(axis=1, keepdims=True).clip_min(0.2)).sum(), (3, 4)),
        ("narrow", lambda t: (t.narrow(1, 3) * 2.0).sum(), (5, 2)),
        ("reshape", lambda t: (t.reshape(6) * t.reshape(6)).sum(), (2, 3)),
        ("softmax", lambda t: (softmax_rows(t, 0.7) * softmax_rows(t, 0.7)).sum(), (3, 4)),
        ("cosine", lambda t: cosine_rows(t, t + 1.0).sum(), (3, 4)),
        ("ce", lambda t: cross_entropy_rows(softmax_rows(t), [0, 2, 1]), (3, 4)),
        (
            "kl",
            lambda t: kl_rows(softmax_rows(t, 0.5), softmax_rows(t * 0.3 + 0.1, 2.0)),
            (3, 4),
        ),
        ("concat", lambda t: concat([t, t * 2.0], axis=0).tanh().sum(), (2, 3)),
        ("pick", lambda t: (t.pick([1, 0, 2]) ** 2.0).sum(), (3, 4)),
        ("broadcast_bias", lambda t: ((t + t.narrow(0, 1)) * 3.0).sum(), (4, 3)),
    ],
)
def test_gradients_match_finite_differences(name, build, shape):
    check_op(build, shape)


def test_chained_network_gradient():
    rng = np.random.default_rng(8)
    w = rng.normal(size=(4, 3))

    def build(t):
        h = (t @ Tensor(w)).tanh()
        p = softmax_rows(h, 1.0)
        return cross_entropy_rows(p, [0, 2])

    check_op(build, (2, 4))


def test_backward_on_non_scalar_rejected():
    t = Tensor([[1.0, 2.0]], requires_grad=True)
    with pytest.raises(InvalidArgumentError):
        backward(t + 1.0)


def test_frozen_leaf_gets_no_gradient():
    frozen = Tensor([[1.0, 2.0], [3.0, 4.0]])  # requires_grad False
    live = Tensor([[1.0, 1.0]], requires_grad=True)
    backward((live @ frozen).sum())
    assert frozen.grad is None
    assert live.grad is not None


def test_gradient_flows_through_frozen_nodes():
    frozen = Tensor(np.eye(3) * 2.0)
    live = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
    backward((live @ frozen).sum())
    np.testing.assert_allclose(live.grad, [[2.0, 2.0, 2.0]])


def test_gradient_accumulates_across_uses():
    t = Tensor([2.0], requires_grad=True)
    backward((t * 3.0 + t * 4.0).sum())
    np.testing.assert_allclose(t.grad, [7.0])


def test_no_grad_builds_no_graph():
    t = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = t * 2.0
    assert out._prev == () and not out.requires_grad


def test_non_finite_op_result_raises():
    t = Tensor([750.0])
    with pytest.raises(NonFiniteError):
        t.exp().exp()
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])


def test_log_of_non_positive_rejected():
    with pytest.raises(InvalidArgumentError):
        Tensor([0.0]).log()


def test_values_are_float64():
    assert Tensor(np.float32([1.5])).data.dtype == np.float64


def test_softmax_rows_rejects_bad_temperature():
    with pytest.raises(InvalidArgumentError):
        softmax_rows(Tensor([1.0, 2.0]), 0.0)


def test_matmul_requires_rank2():
    with pytest.raises(InvalidArgumentError):
        Tensor([1.0, 2.0]) @ Tensor([[1.0], [2.0]])


def test_zero_row_normalizes_to_zero_cosine():
    a = Tensor(np.array([[0.0, 0.0], [1.0, 0.0]]))
    b = Tensor(np.array([[1.0, 1.0]]))
    sims = cosine_rows(a, b)
    assert sims.data[0, 0] == 0.0
    assert abs(sims.data[1, 0] - 1 / np.sqrt(2)) < 1e-12
