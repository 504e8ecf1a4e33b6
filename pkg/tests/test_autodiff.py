import numpy as np
import pytest

from wcnn import autodiff as ad
from wcnn.tensor import ShapeError, Tensor


def test_sum_gradient_is_ones():
    x = ad.Variable(Tensor([[1.0, -2.0], [3.0, 0.5]]), requires_grad=True)
    loss = ad.total(x)
    leaves = ad.backward(loss)
    assert leaves == [x]
    assert np.array_equal(x.grad.data, np.ones((2, 2)))


def test_elementwise_square_gradient():
    x = ad.Variable(Tensor([1.0, 2.0]), requires_grad=True)
    loss = ad.total(ad.mul(x, x))
    ad.backward(loss)
    assert np.array_equal(x.grad.data, np.array([2.0, 4.0]))


def test_fanout_gradients_sum():
    # y = sum(x*x) + sum(3x) -> dy/dx = 2x + 3
    x = ad.Variable(Tensor([1.0, -4.0, 0.25]), requires_grad=True)
    loss = ad.add(ad.total(ad.mul(x, x)), ad.total(ad.scale(x, 3.0)))
    ad.backward(loss)
    assert np.allclose(x.grad.data, 2 * x.value.data + 3, rtol=0, atol=0)


def test_backward_requires_scalar_loss():
    x = ad.Variable(Tensor([1.0, 2.0]), requires_grad=True)
    y = ad.mul(x, x)
    with pytest.raises(ShapeError):
        ad.backward(y)


def test_backward_twice_raises():
    x = ad.Variable(Tensor([1.0, 2.0]), requires_grad=True)
    loss = ad.total(ad.mul(x, x))
    ad.backward(loss)
    with pytest.raises(RuntimeError):
        ad.backward(loss)


def test_backward_without_grad_leaves_is_empty():
    x = ad.Variable(Tensor([1.0, 2.0]))
    loss = ad.total(ad.mul(x, x))
    assert ad.backward(loss) == []
    assert x.grad is None


def test_no_flow_into_frozen_leaves():
    x = ad.Variable(Tensor([1.0, 2.0]), requires_grad=True)
    frozen = ad.Variable(Tensor([5.0, 7.0]))
    loss = ad.total(ad.mul(x, frozen))
    ad.backward(loss)
    assert frozen.grad is None
    assert np.array_equal(x.grad.data, frozen.value.data)


def _random_graph_grad(seed):
    rng = np.random.default_rng(seed)
    x = ad.Variable(Tensor(rng.standard_normal((4, 3))), requires_grad=True)
    y = ad.Variable(Tensor(rng.standard_normal((4, 3))), requires_grad=True)
    z = ad.add(ad.mul(x, y), ad.scale(x, -0.5))
    loss = ad.add(ad.total(ad.mul(z, z)), ad.total(y))
    ad.backward(loss)
    return x.grad.data.copy(), y.grad.data.copy()


def test_deterministic_gradients():
    gx1, gy1 = _random_graph_grad(11)
    gx2, gy2 = _random_graph_grad(11)
    assert np.array_equal(gx1, gx2)
    assert np.array_equal(gy1, gy2)


def test_concat_channels_backward_splits():
    rng = np.random.default_rng(5)
    a = ad.Variable(Tensor(rng.standard_normal((1, 2, 2, 2))), requires_grad=True)
    b = ad.Variable(Tensor(rng.standard_normal((1, 3, 2, 2))), requires_grad=True)
    cat = ad.concat_channels([a, b])
    w = Tensor(rng.standard_normal((1, 5, 2, 2)))
    loss = ad.total(ad.mul(cat, ad.Variable(w)))
    ad.backward(loss)
    assert np.array_equal(a.grad.data, w.data[:, :2])
    assert np.array_equal(b.grad.data, w.data[:, 2:])


def test_finite_difference_check_identity_sum():
    # binary-exact step: the central difference of a linear map is exact
    err = ad.finite_difference_check(ad.total, Tensor([1.0, 2.0, 3.0]), eps=0.25)
    assert err < 1e-12


def test_finite_difference_check_quadratic():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((3, 3)))
    err = ad.finite_difference_check(lambda v: ad.total(ad.mul(v, v)), x, eps=1e-5)
    assert err < 1e-9


def test_finite_difference_check_flags_missing_grad_term():
    # A deliberately wrong backward closure must be caught by the checker.
    def broken_square(v):
        val = v.value.data**2
        return ad.record("broken", val.sum(), (v,), lambda g: (np.ones_like(val),))

    x = Tensor([1.0, 2.0, 3.0])
    err = ad.finite_difference_check(broken_square, x, eps=1e-5)
    assert err > 1e-2
