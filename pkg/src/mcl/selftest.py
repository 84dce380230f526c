"""Invariant suites shared by ``mcl selftest`` and the test-suite.

Each suite returns a list of :class:`Check` rows; nothing here raises on a
failed property, so a caller can report every result at once.
"""
from __future__ import annotations

import string
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .complexity import compare_reference
from .model import ClassifierSpec, MclModel, VectorModel, init_random
from .tensor import kron_all, multi_mode_product, truncated_svd, vec


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float = 0.0
    detail: str = ""


def _weighted_sum(node: ag.Node, weights: np.ndarray) -> ag.Node:
    """Scalar ``sum(node * weights)`` so that every output entry matters."""
    idx = string.ascii_lowercase[:node.value.ndim]
    return ag.einsum(f"{idx},{idx}->", node, ag.constant(weights))


# -- Kronecker identity --------------------------------------------------------

def kronecker_suite(instances: int = 120, seed: int = 0, tol: float = 1e-10) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        order = int(rng.integers(2, 4))
        shape = tuple(int(v) for v in rng.integers(1, 7, size=order))
        x = rng.standard_normal(shape)
        ws = [rng.standard_normal((int(rng.integers(1, 7)), i)) for i in shape]
        lhs = vec(multi_mode_product(x, ws))
        rhs = kron_all(ws) @ vec(x)
        dev = np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300)
        worst = max(worst, float(dev))
    return [Check("kronecker", f"{instances} random instances", worst < tol, worst,
                  f"max relative deviation {worst:.3e}")]


# -- gradient checks --------------------------------------------------------------

def _op_cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], ag.Node], dict[str, ag.Node]]]:
    def p(*shape):
        return ag.parameter(rng.standard_normal(shape))

    cases = []

    for _ in range(6):
        order = int(rng.integers(2, 5))
        shape = tuple(int(v) for v in rng.integers(2, 5, size=order))
        mode = int(rng.integers(order))
        x, w = p(*shape), p(int(rng.integers(1, 5)), shape[mode])
        out_shape = list(shape)
        out_shape[mode] = w.shape[0]
        r = rng.standard_normal(out_shape)
        cases.append((f"mode_n_product {shape} mode {mode}",
                      lambda x=x, w=w, mode=mode, r=r: _weighted_sum(ag.mode_n_product(x, w, mode), r),
                      {"x": x, "w": w}))

    w = p(3, 5)
    r = rng.standard_normal((5, 3))
    cases.append(("transpose", lambda w=w, r=r: _weighted_sum(ag.transpose(w), r), {"w": w}))

    a, b = p(4, 3, 2), p(2, 5, 3)
    r = rng.standard_normal((4, 5, 2))
    cases.append(("einsum", lambda a=a, b=b, r=r: _weighted_sum(ag.einsum("bdc,cmd->bmc", a, b), r), {"a": a, "b": b}))

    a, b = p(3, 4, 2), p(3, 2, 5)
    r = rng.standard_normal((3, 4, 5))
    cases.append(("matmul", lambda a=a, b=b, r=r: _weighted_sum(ag.matmul(a, b), r), {"a": a, "b": b}))

    x = p(2, 3, 4)
    r = rng.standard_normal((4, 2, 3))
    cases.append(("permute", lambda x=x, r=r: _weighted_sum(ag.permute(x, (2, 0, 1)), r), {"x": x}))

    x, w, bias = p(4, 6), p(3, 6), p(3)
    r = rng.standard_normal((4, 3))
    cases.append(("dense", lambda x=x, w=w, bias=bias, r=r: _weighted_sum(ag.dense(x, w, bias), r), {"x": x, "w": w, "b": bias}))

    # keep inputs away from the kink so central differences stay one-sided
    xv = rng.standard_normal((5, 4))
    xv += np.sign(xv) * 0.1
    x = ag.parameter(xv)
    r = rng.standard_normal((5, 4))
    cases.append(("relu", lambda x=x, r=r: _weighted_sum(ag.relu(x), r), {"x": x}))

    for stride in (1, 2):
        x, k, bias = p(2, 5, 6, 2), p(3, 3, 2, 3), p(3)
        ho, wo = (5 + 2 - 3) // stride + 1, (6 + 2 - 3) // stride + 1
        r = rng.standard_normal((2, ho, wo, 3))
        cases.append((f"conv2d stride {stride}",
                      lambda x=x, k=k, bias=bias, stride=stride, r=r:
                      _weighted_sum(ag.conv2d(x, k, bias, stride), r),
                      {"x": x, "k": k, "b": bias}))

    x = p(2, 3, 4, 5)
    r = rng.standard_normal((2, 5))
    cases.append(("global_average_pool", lambda x=x, r=r: _weighted_sum(ag.global_average_pool(x), r), {"x": x}))

    x = p(2, 3, 4)
    r = rng.standard_normal((6, 4))
    cases.append(("reshape", lambda x=x, r=r: _weighted_sum(ag.reshape(x, (6, 4)), r), {"x": x}))

    a, b = p(3, 4), p(3, 4)
    r = rng.standard_normal((3, 4))
    cases.append(("add", lambda a=a, b=b, r=r: _weighted_sum(ag.add(a, b), r), {"a": a, "b": b}))

    x = p(3, 4)
    r = rng.standard_normal((3, 4))
    cases.append(("scale", lambda x=x, r=r: _weighted_sum(ag.scale(x, -1.7), r), {"x": x}))

    x = p(3, 4)
    cases.append(("sum_all", lambda x=x: ag.scale(ag.sum_all(x), 0.3), {"x": x}))

    z = p(6, 4)
    labels = rng.integers(0, 4, size=6)
    cases.append(("softmax_cross_entropy", lambda z=z, labels=labels: ag.softmax_cross_entropy(z, labels), {"z": z}))
    return cases


def _model_cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], ag.Node], dict[str, ag.Node]]]:
    cases = []
    x = 2.0 * rng.standard_normal((4, 5, 4, 3))
    y = rng.integers(0, 3, size=4)
    mlp = ClassifierSpec("mlp", 3, (6,))
    variants = {
        "mcl graph, separate weights": MclModel((5, 4, 3), (3, 2, 2), classifier=mlp),
        "mcl graph, shared weights": MclModel((5, 4, 3), (3, 2, 2), shared_weights=True, classifier=mlp),
        "mcl graph, relu synthesis": MclModel((5, 4, 3), (3, 2, 2), (4, 3, 2), nonlinearity=True,
                                              classifier=mlp),
        "mcl graph, linear classifier": MclModel((5, 4, 3), (2, 3, 1),
                                                 classifier=ClassifierSpec("linear", 3)),
        "mcl graph, conv classifier": MclModel((5, 4, 3), (3, 3, 2), classifier=ClassifierSpec(
            "convnet", 3, conv_channels=(2, 3), conv_strides=(1, 2))),
        "vector graph": VectorModel((5, 4, 3), 6, classifier=mlp),
    }
    for i, (name, model) in enumerate(variants.items()):
        init_random(model, seed=100 + i)
        # zero biases can park a hidden unit exactly on the ReLU kink
        for key in model.params:
            if key.endswith(".b"):
                model.params[key] += 0.1 * rng.standard_normal(model.params[key].shape)
        nodes = model.nodes()
        xc = ag.constant(x)
        cases.append((name, lambda model=model, nodes=nodes, xc=xc:
                      ag.softmax_cross_entropy(model.graph(nodes, xc), y), nodes))
    return cases


def gradient_suite(seed: int = 0, tol: float = 1e-4, max_coords: int = 60) -> list[Check]:
    """Finite-difference checks of every op and of the full model graphs."""
    rng = np.random.default_rng(seed)
    rows = []
    for name, build, params in _op_cases(rng) + _model_cases(rng):
        report = ag.grad_check(build, params, max_coords=max_coords, seed=seed, tolerance=tol)
        worst = max(report.per_parameter, key=report.per_parameter.get)
        rows.append(Check("gradient", name, report.passed, report.max_rel_error,
                          f"worst parameter {worst}"))
    return rows


# -- golden costs and SVD ----------------------------------------------------------

def reference_suite() -> list[Check]:
    """Printed cost tables; known misprints must still disagree with the exact count."""
    rows = []
    for r in compare_reference():
        note = "known misprint" if r["flagged"] else ""
        rows.append(Check("reference", f"{r['configuration']} @ {r['extents']} {r['quantity']}",
                          r["match"] != r["flagged"], float(r["value"]),
                          f"printed {r['printed']}K {note}".strip()))
    return rows


def svd_suite(seed: int = 0, trials: int = 20) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_sv = worst_orth = worst_rec = 0.0
    signs_ok = True
    for _ in range(trials):
        m, n = (int(v) for v in rng.integers(1, 12, size=2))
        a = rng.standard_normal((m, n))
        k = min(m, n)
        u, s, v = truncated_svd(a, k)
        ref = np.linalg.svd(a, compute_uv=False)
        worst_sv = max(worst_sv, float(np.max(np.abs(s - ref)) / ref[0]))
        worst_orth = max(worst_orth, float(np.max(np.abs(u.T @ u - np.eye(k)))),
                         float(np.max(np.abs(v.T @ v - np.eye(k)))))
        worst_rec = max(worst_rec, float(np.max(np.abs(u * s @ v.T - a))))
        pivots = u[np.argmax(np.abs(u), axis=0), np.arange(k)]
        signs_ok &= bool(np.all(pivots >= 0))
    return [
        Check("svd", "singular values vs LAPACK", worst_sv < 1e-10, worst_sv),
        Check("svd", "orthonormal factors", worst_orth < 1e-10, worst_orth),
        Check("svd", "reconstruction", worst_rec < 1e-10, worst_rec),
        Check("svd", "sign convention", signs_ok, 0.0),
    ]


def run_all(seed: int = 0) -> list[Check]:
    return kronecker_suite(seed=seed) + gradient_suite(seed=seed) + reference_suite() + svd_suite(seed=seed)
