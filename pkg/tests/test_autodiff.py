import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosslog import autodiff as ad
from crosslog.autodiff import Tensor
from crosslog.errors import ShapeMismatch


def test_matmul_identity():
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(ad.matmul(Tensor(a), Tensor(np.eye(3))).data, a)


def test_uniform_logits_cross_entropy_is_ln2():
    assert ad.softmax_cross_entropy(Tensor([[0.0, 0.0]]), [0]).item() == pytest.approx(math.log(2), abs=1e-12)


def test_cross_entropy_is_stable_for_large_logits():
    loss = ad.softmax_cross_entropy(Tensor([[1000.0, -1000.0]]), [1])
    assert loss.item() == pytest.approx(2000.0)


@pytest.mark.parametrize(
    "fn",
    [
        lambda: ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3)))),
        lambda: ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones(4))),
        lambda: ad.softmax_cross_entropy(Tensor(np.ones((2, 2))), [0]),
        lambda: ad.softmax_cross_entropy(Tensor(np.ones((1, 2))), [2]),
        lambda: ad.add_scalars(Tensor(np.ones(2))),
        lambda: ad.mean_rows(Tensor(np.ones(3))),
    ],
)
def test_shape_errors(fn):
    with pytest.raises(ShapeMismatch):
        fn()


def test_shape_error_names_shapes():
    with pytest.raises(ShapeMismatch, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_zero_sized_tensor_rejected():
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((0, 2)))


def test_backward_needs_scalar():
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((2, 2)), requires_grad=True).backward()


def test_fd_square_at_three():
    x = Tensor([[3.0]], requires_grad=True)
    x.grad = None
    assert ad.finite_diff_check(lambda p: ad.matmul(p[0], p[0]), [x]) < 1e-8


def test_fd_constant_function():
    x = Tensor([[1.0, 2.0]], requires_grad=True)
    const = Tensor([[5.0]])
    assert ad.finite_diff_check(lambda p: ad.add_scalars(const), [x]) == 0.0


def test_fd_rejects_bad_eps():
    with pytest.raises(ValueError):
        ad.finite_diff_check(lambda p: p[0], [Tensor([[1.0]])], eps=0.0)


def test_fd_restores_parameters():
    x = Tensor(np.array([[0.3, -0.2]]), requires_grad=True)
    before = x.data.copy()
    ad.finite_diff_check(lambda p: ad.softmax_cross_entropy(p[0], [1]), [x])
    assert np.array_equal(x.data, before)


def test_plain_fd_flags_the_reversal():
    # without a reference the reversed gradient disagrees with the forward derivative
    x = Tensor(np.array([[0.3, -0.2]]), requires_grad=True)
    assert ad.finite_diff_check(lambda p: ad.softmax_cross_entropy(ad.grad_reverse(p[0], 1.0), [1]), [x]) > 1.0


def test_grl_forward_is_identity_bitwise():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
    assert np.array_equal(ad.grad_reverse(x, 0.7).data, x.data)


def test_grl_rejects_negative_lambda():
    with pytest.raises(ValueError):
        ad.grad_reverse(Tensor([[1.0]]), -0.1)


def test_shared_input_accumulates():
    # f(x) = CE(x + x) reaches x through two paths
    x = Tensor(np.array([[0.5, -0.5]]), requires_grad=True)
    assert ad.finite_diff_check(lambda p: ad.softmax_cross_entropy(ad.add(p[0], p[0]), [0]), [x]) < 1e-7


def test_take_rows_repeated_index_accumulates():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    ad.softmax_cross_entropy(ad.take_rows(x, [0, 0]), [1, 1]).backward()
    assert np.allclose(x.grad[0], [0.5, -0.5])
    assert np.array_equal(x.grad[1], [0.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31))
def test_backward_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(3, 2))
    labels = rng.integers(0, 2, size=3)

    def grad_of(fn):
        x = Tensor(data.copy(), requires_grad=True)
        fn(x).backward()
        return x.grad

    f = lambda x: ad.softmax_cross_entropy(ad.tanh(x), labels)
    g = lambda x: ad.softmax_cross_entropy(x, 1 - labels)
    combo = grad_of(lambda x: ad.add_scalars(ad.scale(f(x), a), ad.scale(g(x), b)))
    assert np.allclose(combo, a * grad_of(f) + b * grad_of(g), atol=1e-12)


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(42)
        w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        x = Tensor(rng.normal(size=(5, 4)))
        loss = ad.softmax_cross_entropy(ad.relu(ad.matmul(x, w)), rng.integers(0, 3, 5))
        loss.backward()
        return loss.data.tobytes(), w.grad.tobytes()

    assert run() == run()
