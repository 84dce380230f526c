import math

import numpy as np
import pytest

from mcl import autograd as ag
from mcl.selftest import gradient_suite
from mcl.tensor import ShapeError


def weighted(node, r):
    idx = "abcdefgh"[:node.value.ndim]
    return ag.einsum(f"{idx},{idx}->", node, ag.constant(r))


def test_relu_backward_mask_at_zero():
    x = ag.parameter([-1.0, 0.0, 2.0])
    out = ag.relu(x)
    ag.backward(out, seed=np.ones(3))
    assert x.grad.tolist() == [0.0, 0.0, 1.0]
    assert out.value.tolist() == [0.0, 0.0, 2.0]


def test_mode_product_gradient_on_3x4x2():
    rng = np.random.default_rng(0)
    x = ag.parameter(rng.standard_normal((3, 4, 2)))
    w = ag.parameter(rng.standard_normal((5, 4)))
    r = rng.standard_normal((3, 5, 2))
    report = ag.grad_check(lambda: weighted(ag.mode_n_product(x, w, 1), r), {"x": x, "w": w})
    assert report.max_rel_error < 1e-6


def test_mode_product_backward_formulas():
    rng = np.random.default_rng(1)
    xv, wv = rng.standard_normal((3, 4, 2)), rng.standard_normal((5, 2))
    g = rng.standard_normal((3, 4, 5))
    x, w = ag.parameter(xv), ag.parameter(wv)
    ag.backward(ag.mode_n_product(x, w, 2), seed=g)
    assert np.allclose(x.grad, np.einsum("abj,ji->abi", g, wv))
    assert np.allclose(w.grad, np.einsum("abj,abi->ji", g, xv))


def test_dense_identity_passes_gradient_through():
    x = ag.parameter(np.arange(6.0).reshape(2, 3))
    out = ag.dense(x, ag.constant(np.eye(3)), ag.constant(np.zeros(3)))
    assert np.array_equal(out.value, x.value)
    g = np.array([[1.0, -2, 3], [0.5, 0, 7]])
    ag.backward(out, seed=g)
    assert np.array_equal(x.grad, g)


def test_linear_graph_is_exact():
    theta = ag.parameter(np.random.default_rng(2).standard_normal(7))
    report = ag.grad_check(lambda: ag.sum_all(theta), {"theta": theta})
    assert report.max_rel_error < 1e-10


def test_softmax_ce_uniform_logits():
    loss = ag.softmax_cross_entropy(ag.constant(np.zeros((3, 10))), [0, 4, 9])
    assert math.isclose(float(loss.value), math.log(10), rel_tol=0, abs_tol=1e-15)


def test_softmax_ce_saturates():
    logits = np.zeros((2, 3))
    logits[0, 1] = logits[1, 2] = 20.0
    loss = ag.softmax_cross_entropy(ag.constant(logits), [1, 2])
    assert 0 <= float(loss.value) < 1e-8


def test_softmax_ce_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((8, 4))
    labels = rng.integers(0, 4, size=8)
    node = ag.parameter(z)
    loss = ag.softmax_cross_entropy(node, labels)
    ag.backward(loss)
    p = np.exp(z - z.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    ref_loss = -np.log(p[np.arange(8), labels]).mean()
    assert math.isclose(float(loss.value), ref_loss, rel_tol=1e-12)
    onehot = np.eye(4)[labels]
    assert np.allclose(node.grad, (p - onehot) / 8, atol=1e-15)
    report = ag.grad_check(lambda: ag.softmax_cross_entropy(node, labels), {"z": node})
    assert report.max_rel_error < 1e-6


def test_softmax_ce_rejects_bad_labels():
    with pytest.raises(ValueError):
        ag.softmax_cross_entropy(ag.constant(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ShapeError):
        ag.softmax_cross_entropy(ag.constant(np.zeros((2, 3))), [0])


def test_loss_is_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(20):
        z = 10 * rng.standard_normal((5, 6))
        assert float(ag.softmax_cross_entropy(ag.constant(z), rng.integers(0, 6, 5)).value) >= 0


@pytest.mark.parametrize("seed", range(24))
def test_random_shape_gradients(seed):
    """Property: every op passes below 1e-4 on freshly drawn shapes."""
    rng = np.random.default_rng(1000 + seed)
    order = int(rng.integers(1, 5))
    shape = tuple(int(v) for v in rng.integers(1, 5, size=order))
    mode = int(rng.integers(order))
    x = ag.parameter(rng.standard_normal(shape))
    w = ag.parameter(rng.standard_normal((int(rng.integers(1, 5)), shape[mode])))
    y = ag.parameter(rng.standard_normal(shape))
    out_shape = list(shape)
    out_shape[mode] = w.shape[0]
    r = rng.standard_normal(out_shape)
    c = float(rng.uniform(-2, 2))

    def build():
        s = ag.add(ag.scale(x, c), y)
        return weighted(ag.mode_n_product(s, w, mode), r)

    report = ag.grad_check(build, {"x": x, "w": w, "y": y})
    assert report.passed, report.per_parameter

    xv = rng.standard_normal((int(rng.integers(1, 4)), int(rng.integers(1, 6))))
    xv += 0.1 * np.sign(xv)
    xr = ag.parameter(xv)
    wd = ag.parameter(rng.standard_normal((3, xv.shape[1])))
    b = ag.parameter(rng.standard_normal(3))
    r2 = rng.standard_normal((xv.shape[0], 3))
    report = ag.grad_check(lambda: weighted(ag.dense(ag.relu(xr), wd, b), r2), {"x": xr, "w": wd, "b": b})
    assert report.passed, report.per_parameter


def test_gradient_suite_all_ops_and_graphs():
    rows = gradient_suite(seed=0)
    names = {r.name.split(" ")[0] for r in rows}
    for op in ("mode_n_product", "transpose", "einsum", "matmul", "permute", "dense", "relu", "conv2d",
               "global_average_pool", "reshape", "add", "scale", "sum_all", "softmax_cross_entropy"):
        assert op in names
    bad = [(r.name, r.value) for r in rows if not r.passed]
    assert not bad
    full = [r for r in rows if r.name == "mcl graph, separate weights"][0]
    assert full.value < 1e-5


def test_corrupted_backward_is_caught():
    rng = np.random.default_rng(5)
    x = ag.parameter(rng.standard_normal((3, 4)))
    w = ag.parameter(rng.standard_normal((2, 4)))
    r = rng.standard_normal((3, 2))
    try:
        ag._MODE_GRAD_SCALE = 2.0
        report = ag.grad_check(lambda: weighted(ag.mode_n_product(x, w, 1), r), {"x": x, "w": w})
    finally:
        ag._MODE_GRAD_SCALE = 1.0
    # (2g - g) / 2g on the corrupted input gradient; the factor gradient is intact
    assert math.isclose(report.per_parameter["x"], 0.5, rel_tol=1e-6)
    assert report.per_parameter["w"] < 1e-8
    assert not report.passed


def test_backward_of_sum_is_sum_of_backwards():
    rng = np.random.default_rng(6)
    x = ag.parameter(rng.standard_normal((3, 4)))
    w = ag.parameter(rng.standard_normal((2, 4)))
    r1, r2 = rng.standard_normal((2, 3, 2))

    def f1():
        return weighted(ag.mode_n_product(x, w, 1), r1)

    def f2():
        return weighted(ag.relu(ag.mode_n_product(x, w, 1)), r2)

    ag.backward(ag.add(f1(), f2()))
    joint = x.grad.copy(), w.grad.copy()
    x.zero_grad()
    w.zero_grad()
    ag.backward(f1())
    ag.backward(f2())
    assert np.allclose(joint[0], x.grad) and np.allclose(joint[1], w.grad)


def test_tied_parameter_accumulates_both_uses():
    rng = np.random.default_rng(7)
    phi = ag.parameter(rng.standard_normal((3, 5)))
    x = ag.constant(rng.standard_normal((2, 5)))
    r = rng.standard_normal((2, 5))

    def build():
        z = ag.mode_n_product(x, phi, 1)
        return weighted(ag.mode_n_product(z, ag.transpose(phi), 1), r)

    report = ag.grad_check(build, {"phi": phi})
    assert report.max_rel_error < 1e-7


def test_conv2d_matches_direct_loop():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((1, 5, 4, 2))
    k = rng.standard_normal((3, 3, 2, 3))
    out = ag.conv2d(ag.constant(x), ag.constant(k), stride=2).value
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((1, 3, 2, 3))
    for i in range(3):
        for j in range(2):
            patch = xp[0, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
            ref[0, i, j] = np.einsum("hwc,hwco->o", patch, k)
    assert np.allclose(out, ref)


@pytest.mark.parametrize("bad", [
    lambda: ag.dense(ag.constant(np.zeros((2, 3))), ag.constant(np.zeros((4, 2)))),
    lambda: ag.mode_n_product(ag.constant(np.zeros((2, 3))), ag.constant(np.zeros((2, 2))), 1),
    lambda: ag.add(ag.constant(np.zeros(3)), ag.constant(np.zeros(4))),
    lambda: ag.conv2d(ag.constant(np.zeros((1, 4, 4, 2))), ag.constant(np.zeros((3, 3, 3, 1)))),
    lambda: ag.matmul(ag.constant(np.zeros((2, 3, 4))), ag.constant(np.zeros((2, 3, 4)))),
    lambda: ag.permute(ag.constant(np.zeros((2, 3))), (0, 0)),
])
def test_shape_errors_at_construction(bad):
    with pytest.raises(ShapeError):
        bad()


def test_backward_requires_scalar_or_seed():
    x = ag.parameter(np.ones(3))
    with pytest.raises(ShapeError):
        ag.backward(ag.scale(x, 2.0))
