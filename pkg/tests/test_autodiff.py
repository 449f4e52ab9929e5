import numpy as np
import pytest

from miniaffect.nn import autodiff as ad
from miniaffect.nn.autodiff import Node, Tape

from oracles import fd_gradients, max_relative_error


def scalar_fd(fn, x, eps=1e-6):
    """Finite-difference gradient of a scalar fn over a flat array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_unary(op, x, tol=1e-7, **kwargs):
    def value(arr):
        tape = Tape()
        return float(ad.mean_all(tape, op(tape, Node(arr), **kwargs)).value)

    tape = Tape()
    node = Node(x)
    loss = ad.mean_all(tape, op(tape, node, **kwargs))
    tape.backward(loss)
    fd = scalar_fd(value, x.copy())
    assert np.abs(node.grad - fd).max() < tol


def test_add_broadcast_gradients():
    rng = np.random.default_rng(0)
    a = Node(rng.standard_normal((3, 4)))
    b = Node(rng.standard_normal((4,)))
    tape = Tape()
    loss = ad.mean_all(tape, ad.add(tape, a, b))
    tape.backward(loss)
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (4,)
    assert np.allclose(b.grad, np.full(4, 3 / 12))


def test_mul_gradients():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3))
    y = rng.standard_normal((2, 3))
    tape = Tape()
    nx, ny = Node(x), Node(y)
    loss = ad.mean_all(tape, ad.mul(tape, nx, ny))
    tape.backward(loss)
    assert np.allclose(nx.grad, y / 6)
    assert np.allclose(ny.grad, x / 6)


def test_mul_by_plain_constant():
    tape = Tape()
    x = Node(np.array([1.0, 2.0]))
    out = ad.mul(tape, x, 3.0)
    loss = ad.mean_all(tape, out)
    tape.backward(loss)
    assert np.allclose(out.value, [3.0, 6.0])
    assert np.allclose(x.grad, [1.5, 1.5])


def test_matmul_2d_gradients():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))

    def value(arrs):
        tape = Tape()
        return float(ad.mean_all(tape, ad.matmul(tape, Node(arrs["a"]), Node(arrs["b"]))).value)

    params = {"a": a.copy(), "b": b.copy()}
    tape = Tape()
    na, nb = Node(params["a"]), Node(params["b"])
    loss = ad.mean_all(tape, ad.matmul(tape, na, nb))
    tape.backward(loss)
    fd = fd_gradients(value, params, eps=1e-6)
    assert max_relative_error({"a": na.grad, "b": nb.grad}, fd) < 1e-7


def test_matmul_batched_gradients():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((2, 2, 3, 4))
    b = rng.standard_normal((2, 2, 4, 3))

    def value(arrs):
        tape = Tape()
        return float(ad.mean_all(tape, ad.matmul(tape, Node(arrs["a"]), Node(arrs["b"]))).value)

    params = {"a": a.copy(), "b": b.copy()}
    tape = Tape()
    na, nb = Node(params["a"]), Node(params["b"])
    loss = ad.mean_all(tape, ad.matmul(tape, na, nb))
    tape.backward(loss)
    fd = fd_gradients(value, params, eps=1e-6)
    assert max_relative_error({"a": na.grad, "b": nb.grad}, fd) < 1e-7


def test_reshape_transpose_roundtrip_grad():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 4))
    tape = Tape()
    node = Node(x)
    out = ad.transpose(tape, ad.reshape(tape, node, (2, 2, 3, 2)), (0, 2, 1, 3))
    loss = ad.mean_all(tape, out)
    tape.backward(loss)
    assert np.allclose(node.grad, np.full_like(x, 1 / x.size))


def test_embedding_gradient_accumulates_repeats():
    table = Node(np.arange(12, dtype=np.float64).reshape(4, 3))
    ids = np.array([[0, 1, 1], [2, 1, 0]])
    tape = Tape()
    out = ad.embedding(tape, table, ids)
    loss = ad.mean_all(tape, out)
    tape.backward(loss)
    g = 1.0 / out.value.size
    assert np.allclose(table.grad[1], 3 * g)  # id 1 used three times
    assert np.allclose(table.grad[3], 0.0)


def test_first_rows_and_select_cls():
    x = Node(np.arange(24, dtype=np.float64).reshape(2, 3, 4))
    tape = Tape()
    out = ad.select_cls(tape, x)
    assert out.value.shape == (2, 4)
    loss = ad.mean_all(tape, out)
    tape.backward(loss)
    assert np.count_nonzero(x.grad) == 8
    rows = Node(np.arange(10, dtype=np.float64).reshape(5, 2))
    tape = Tape()
    trimmed = ad.first_rows(tape, rows, 3)
    assert trimmed.value.shape == (3, 2)
    loss = ad.mean_all(tape, trimmed)
    tape.backward(loss)
    assert np.allclose(rows.grad[3:], 0.0)


def test_layer_norm_gradients_match_fd():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 6))
    gain = rng.standard_normal(6)
    bias = rng.standard_normal(6)
    params = {"x": x.copy(), "gain": gain.copy(), "bias": bias.copy()}

    def value(arrs):
        tape = Tape()
        out = ad.layer_norm(tape, Node(arrs["x"]), Node(arrs["gain"]), Node(arrs["bias"]))
        return float(ad.mean_all(tape, ad.mul(tape, out, out)).value)

    tape = Tape()
    nodes = {k: Node(v) for k, v in params.items()}
    out = ad.layer_norm(tape, nodes["x"], nodes["gain"], nodes["bias"])
    loss = ad.mean_all(tape, ad.mul(tape, out, out))
    tape.backward(loss)
    fd = fd_gradients(value, params, eps=1e-6)
    assert max_relative_error({k: n.grad for k, n in nodes.items()}, fd) < 1e-6


def test_gelu_gradient_matches_fd():
    rng = np.random.default_rng(6)
    check_unary(ad.gelu, rng.standard_normal((3, 5)) * 2)


def test_gelu_known_values():
    tape = Tape()
    out = ad.gelu(tape, Node(np.array([0.0, 100.0, -100.0])))
    assert out.value[0] == 0.0
    assert np.isclose(out.value[1], 100.0)
    assert np.isclose(out.value[2], 0.0)


def test_masked_softmax_rows_sum_to_one_over_unmasked():
    rng = np.random.default_rng(7)
    scores = Node(rng.standard_normal((2, 1, 4, 4)))
    mask = np.array([[True, True, True, False], [True, True, False, False]])[:, None, None, :]
    tape = Tape()
    probs = ad.masked_softmax(tape, scores, mask)
    sums = probs.value.sum(axis=-1)
    assert np.allclose(sums, 1.0, atol=1e-10)
    assert np.all(probs.value[0, :, :, 3] == 0.0)
    assert np.all(probs.value[1, :, :, 2:] == 0.0)


def test_masked_softmax_gradient_matches_fd():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 3))
    mask = np.array([[True, True, False], [True, True, True]])
    weights = rng.standard_normal((2, 3))  # fixed projection to a scalar

    def value(arr):
        tape = Tape()
        probs = ad.masked_softmax(tape, Node(arr), mask)
        return float(ad.mean_all(tape, ad.mul(tape, probs, weights)).value)

    tape = Tape()
    node = Node(x)
    probs = ad.masked_softmax(tape, node, mask)
    loss = ad.mean_all(tape, ad.mul(tape, probs, weights))
    tape.backward(loss)
    fd = scalar_fd(value, x.copy())
    assert np.abs(node.grad - fd).max() < 1e-7


def test_logsumexp_and_gather_grads():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((4, 7))
    idx = rng.integers(0, 7, size=4)

    def value(arr):
        tape = Tape()
        node = Node(arr)
        lse = ad.logsumexp_rows(tape, node)
        picked = ad.gather_rows(tape, node, idx)
        return float(ad.mean_all(tape, ad.sub(tape, lse, picked)).value)

    tape = Tape()
    node = Node(x)
    loss = ad.mean_all(tape, ad.sub(tape, ad.logsumexp_rows(tape, node), ad.gather_rows(tape, node, idx)))
    tape.backward(loss)
    fd = scalar_fd(value, x.copy())
    assert np.abs(node.grad - fd).max() < 1e-7


def test_logsumexp_extreme_values_stable():
    tape = Tape()
    out = ad.logsumexp_rows(tape, Node(np.array([[1000.0, 0.0], [-1000.0, -1000.0]])))
    assert np.isfinite(out.value).all()
    assert np.isclose(out.value[0], 1000.0)


def test_dropout_scales_and_masks():
    rng = np.random.Generator(np.random.PCG64(0))
    tape = Tape(rng=rng)
    x = Node(np.ones((100, 100)))
    out = ad.dropout(tape, x, 0.5)
    kept = out.value != 0.0
    assert np.all(out.value[kept] == 2.0)  # inverted scaling by 1/keep
    assert 0.4 < kept.mean() < 0.6
    loss = ad.mean_all(tape, out)
    tape.backward(loss)
    assert np.all((x.grad != 0) == kept)


def test_dropout_requires_rng():
    tape = Tape()
    with pytest.raises(ValueError):
        ad.dropout(tape, Node(np.ones(3)), 0.1)


def test_tape_consumed_twice_raises():
    tape = Tape()
    x = Node(np.array([1.0, 2.0]))
    loss = ad.mean_all(tape, x)
    tape.backward(loss)
    with pytest.raises(RuntimeError):
        tape.backward(loss)


def test_backward_requires_scalar():
    tape = Tape()
    x = Node(np.ones(3))
    out = ad.mul(tape, x, 2.0)
    with pytest.raises(ValueError):
        tape.backward(out)


def test_gradient_linearity():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((3, 3))

    def grad_of(scale):
        tape = Tape()
        node = Node(x)
        loss = ad.mul(tape, ad.mean_all(tape, ad.mul(tape, node, node)), scale)
        tape.backward(loss)
        return node.grad

    assert np.allclose(grad_of(3.0), 3.0 * grad_of(1.0))


def test_fanout_accumulates_gradients():
    tape = Tape()
    x = Node(np.array([2.0]))
    # x used twice: loss = mean(x*x + x*x) -> dloss/dx = 4x... via two consumers
    a = ad.mul(tape, x, x)
    b = ad.mul(tape, x, x)
    loss = ad.mean_all(tape, ad.add(tape, a, b))
    tape.backward(loss)
    assert np.allclose(x.grad, [8.0])
