"""Gradient checks for the autodiff core against central finite differences."""

import numpy as np
import pytest

from phyfm import adcore as ad


def fd_gradcheck(build_loss, arrays, h=1e-5, tol=1e-5):
    """Analytic gradients vs central differences on every input coordinate.

    ``build_loss`` maps a list of Tensors to a scalar Tensor; it is rebuilt
    for every probe so the graph stays fresh.
    """
    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    ad.backward(loss)

    def eval_loss(mod_arrays):
        ts = [ad.Tensor(a, requires_grad=True) for a in mod_arrays]
        return float(build_loss(ts).value)

    for k, (t, base) in enumerate(zip(tensors, arrays)):
        assert t.grad is not None, "gradient missing"
        grad = t.grad
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            fd = (eval_loss(plus) - eval_loss(minus)) / (2 * h)
            err = abs(grad[idx] - fd) / max(abs(fd), abs(grad[idx]), 1.0)
            assert err < tol, f"grad mismatch at {idx}: ad={grad[idx]} fd={fd}"
            it.iternext()


def _proj(rng, shape):
    """Fixed random projection turning any output into a scalar loss."""
    c = rng.standard_normal(shape)
    return lambda t: ad.sum_(ad.multiply(t, ad.Tensor(c)))


RNG = np.random.default_rng(0)


def test_add_broadcast_grad():
    a = RNG.standard_normal((3, 4))
    b = RNG.standard_normal((4,))
    p = _proj(RNG, (3, 4))
    fd_gradcheck(lambda ts: p(ad.add(ts[0], ts[1])), [a, b])


def test_multiply_divide_grad():
    a = RNG.standard_normal((2, 3))
    b = RNG.standard_normal((2, 3)) + 3.0
    p = _proj(RNG, (2, 3))
    fd_gradcheck(lambda ts: p(ad.multiply(ts[0], ts[1])), [a, b])
    fd_gradcheck(lambda ts: p(ad.divide(ts[0], ts[1])), [a, b])


def test_matmul_grad_2d_and_batched():
    a = RNG.standard_normal((3, 4))
    b = RNG.standard_normal((4, 2))
    p = _proj(RNG, (3, 2))
    fd_gradcheck(lambda ts: p(ad.matmul(ts[0], ts[1])), [a, b])

    ab = RNG.standard_normal((2, 3, 4))
    w = RNG.standard_normal((4, 5))
    p2 = _proj(RNG, (2, 3, 5))
    fd_gradcheck(lambda ts: p2(ad.matmul(ts[0], ts[1])), [ab, w])

    qa = RNG.standard_normal((2, 2, 3, 2))
    kb = RNG.standard_normal((2, 2, 2, 3))
    p3 = _proj(RNG, (2, 2, 3, 3))
    fd_gradcheck(lambda ts: p3(ad.matmul(ts[0], ts[1])), [qa, kb])


def test_slice_concat_reshape_transpose_grad():
    a = RNG.standard_normal((4, 6))
    p = _proj(RNG, (2, 3))
    fd_gradcheck(lambda ts: p(ts[0][1:3, 0:6:2]), [a])

    b = RNG.standard_normal((2, 3))
    c = RNG.standard_normal((2, 2))
    pc = _proj(RNG, (2, 5))
    fd_gradcheck(lambda ts: pc(ad.concat([ts[0], ts[1]], axis=1)), [b, c])

    pr = _proj(RNG, (6, 4))
    fd_gradcheck(lambda ts: pr(ad.reshape(ts[0], (6, 4))), [a])

    pt = _proj(RNG, (6, 4))
    fd_gradcheck(lambda ts: pt(ad.transpose(ts[0], (1, 0))), [a])


def test_mean_sum_grad():
    a = RNG.standard_normal((3, 4, 2))
    fd_gradcheck(lambda ts: ad.mean(ts[0]), [a])
    p = _proj(RNG, (3, 2))
    fd_gradcheck(lambda ts: p(ad.mean(ts[0], axis=1)), [a])
    p2 = _proj(RNG, (3, 1, 2))
    fd_gradcheck(lambda ts: p2(ad.sum_(ts[0], axis=1, keepdims=True)), [a])


def test_softmax_uniform_and_grad():
    const = ad.softmax(ad.Tensor(np.full((5,), 2.5)))
    assert np.allclose(const.value, 0.2, atol=1e-15)

    a = RNG.standard_normal((2, 4))
    p = _proj(RNG, (2, 4))
    fd_gradcheck(lambda ts: p(ad.softmax(ts[0])), [a])


def test_layer_norm_stats_and_grad():
    x = RNG.standard_normal((7, 16)) * 3 + 1
    y = ad.layer_norm(ad.Tensor(x)).value
    assert np.all(np.abs(y.mean(axis=-1)) < 1e-12)
    assert np.all(np.abs(y.var(axis=-1) - 1.0) < 1e-4)  # eps-limited

    a = RNG.standard_normal((3, 5))
    p = _proj(RNG, (3, 5))
    fd_gradcheck(lambda ts: p(ad.layer_norm(ts[0])), [a])


def test_activation_grads():
    a = RNG.standard_normal((4, 3)) * 2
    a[0, 0] = 0.5  # keep away from the relu kink
    p = _proj(RNG, (4, 3))
    fd_gradcheck(lambda ts: p(ad.relu(ts[0])), [a])
    fd_gradcheck(lambda ts: p(ad.gelu(ts[0])), [a])
    fd_gradcheck(lambda ts: p(ad.sigmoid(ts[0])), [a])
    b = np.abs(a) + 0.5
    fd_gradcheck(lambda ts: p(ad.log(ts[0])), [b])
    fd_gradcheck(lambda ts: p(ad.exp(ts[0])), [a])
    fd_gradcheck(lambda ts: p(ad.sqrt(ts[0])), [b])


def test_embedding_lookup_grad():
    table = RNG.standard_normal((11, 6))
    ids = np.array([3, 3, 0, 7])
    p = _proj(RNG, (4, 6))
    fd_gradcheck(lambda ts: p(ad.embedding_lookup(ts[0], ids)), [table])


def test_loss_grads():
    pred = RNG.standard_normal((3, 4))
    target = RNG.standard_normal((3, 4))
    fd_gradcheck(lambda ts: ad.mse_loss(ts[0], target), [pred])

    logits = RNG.standard_normal((2, 6)) * 3
    tgt = RNG.integers(0, 2, size=(2, 6)).astype(float)
    fd_gradcheck(lambda ts: ad.bce_with_logits_loss(ts[0], tgt), [logits])


def test_backward_mean_and_norm_squared():
    x = ad.Tensor(RNG.standard_normal(10), requires_grad=True)
    ad.backward(ad.mean(x))
    assert np.allclose(x.grad, 0.1, atol=1e-15)

    y = ad.Tensor(RNG.standard_normal(6), requires_grad=True)
    loss = ad.sum_(ad.multiply(y, y))
    ad.backward(loss)
    assert np.allclose(y.grad, 2 * y.value, atol=1e-12)


def test_backward_accumulates_and_requires_scalar():
    x = ad.Tensor(np.ones(4), requires_grad=True)
    loss = ad.mean(x)
    ad.backward(loss)
    first = x.grad.copy()
    loss2 = ad.mean(ad.multiply(x, x))
    ad.backward(loss2)
    assert np.allclose(x.grad, first + 0.5)

    with pytest.raises(ValueError):
        ad.backward(ad.Tensor(np.ones(3), requires_grad=True))


def test_constants_receive_no_grad():
    const = ad.Tensor(RNG.standard_normal((3, 3)))
    param = ad.Tensor(RNG.standard_normal((3, 3)), requires_grad=True)
    loss = ad.mean(ad.matmul(const, param))
    ad.backward(loss)
    assert const.grad is None
    assert param.grad is not None


def test_two_layer_composite_matches_fd():
    w1 = RNG.standard_normal((5, 8)) * 0.3
    b1 = RNG.standard_normal((8,)) * 0.1
    w2 = RNG.standard_normal((8, 2)) * 0.3
    x = RNG.standard_normal((4, 5))
    tgt = RNG.standard_normal((4, 2))

    def build(ts):
        h = ad.gelu(ad.add(ad.matmul(ad.Tensor(x), ts[0]), ts[1]))
        out = ad.matmul(h, ts[2])
        return ad.mse_loss(out, tgt)

    fd_gradcheck(build, [w1, b1, w2])
