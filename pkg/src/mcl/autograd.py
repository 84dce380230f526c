"""A small define-by-run reverse-mode autodiff tape over numpy arrays.

Only the operations the compressive-learning pipeline needs are provided.
Every op builds a :class:`Node` holding its forward value and a closure that
pushes the upstream gradient to its parents.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as tcore
from .tensor import ShapeError

__all__ = [
    "Node",
    "constant",
    "parameter",
    "backward",
    "mode_n_product",
    "transpose",
    "einsum",
    "matmul",
    "permute",
    "dense",
    "relu",
    "conv2d",
    "global_average_pool",
    "reshape",
    "add",
    "scale",
    "sum_all",
    "softmax_cross_entropy",
    "GradCheckReport",
    "grad_check",
]


class Node:
    """A value on the tape together with its accumulated gradient."""

    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "_backward")

    def __init__(self, value, parents: Sequence["Node"] = (), op: str = "leaf",
                 requires_grad: bool | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.op = op
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        # leaves start at zero; intermediate gradients are allocated on first use
        self.grad = np.zeros_like(self.value) if requires_grad and not self.parents else None
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def constant(value) -> Node:
    return Node(value, requires_grad=False)


def parameter(value) -> Node:
    return Node(value, requires_grad=True)


def _accumulate(node: Node, g: np.ndarray) -> None:
    if node.requires_grad:
        if node.grad is None:
            node.grad = np.array(g, dtype=np.float64)
        else:
            node.grad += g


def _topological(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(root: Node, seed: np.ndarray | None = None) -> None:
    """Accumulate d(root)/d(node) into ``node.grad`` for every reachable node.

    Intermediate gradients are reset first, leaf gradients accumulate, so
    two calls on two losses sum their contributions.
    """
    if not root.requires_grad:
        return
    order = _topological(root)
    for node in order:
        if node.parents:
            node.grad = None
    if seed is None:
        if root.value.size != 1:
            raise ShapeError("backward without a seed needs a scalar output")
        seed = np.ones_like(root.value)
    root.grad = root.grad + seed if not root.parents else np.array(seed, dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- ops ---------------------------------------------------------------------

# Scale applied to the mode-n product input gradient; 1.0 except when a
# self-test deliberately corrupts it.
_MODE_GRAD_SCALE = 1.0


def mode_n_product(x: Node, w: Node, mode: int) -> Node:
    out = Node(tcore.mode_n_product(x.value, w.value, mode), (x, w), "mode_n_product")

    def _back(g):
        if x.requires_grad:
            _accumulate(x, _MODE_GRAD_SCALE * tcore.mode_n_product(g, w.value.T, mode))
        if w.requires_grad:
            _accumulate(w, tcore.unfold(g, mode) @ tcore.unfold(x.value, mode).T)

    out._backward = _back
    return out


def transpose(w: Node) -> Node:
    """Matrix transpose; lets a stored factor be read as its transpose."""
    if w.value.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    out = Node(w.value.T.copy(), (w,), "transpose")
    out._backward = lambda g: _accumulate(w, g.T)
    return out


def einsum(spec: str, a: Node, b: Node) -> Node:
    """Two-operand ``np.einsum`` with no index private to a single operand."""
    inputs, out_idx = spec.replace(" ", "").split("->")
    ia, ib = inputs.split(",")
    for idx, other in ((ia, ib), (ib, ia)):
        if any(c not in out_idx and c not in other for c in idx):
            raise ValueError(f"einsum {spec!r}: every index needs a partner")
    out = Node(np.einsum(spec, a.value, b.value), (a, b), "einsum")

    def _back(g):
        if a.requires_grad:
            _accumulate(a, np.einsum(f"{out_idx},{ib}->{ia}", g, b.value))
        if b.requires_grad:
            _accumulate(b, np.einsum(f"{out_idx},{ia}->{ib}", g, a.value))

    out._backward = _back
    return out


def matmul(a: Node, b: Node) -> Node:
    """``a @ b`` over matching leading (batch) axes, as ``np.matmul``."""
    if a.value.ndim < 2 or a.value.ndim != b.value.ndim or a.shape[:-2] != b.shape[:-2] \
            or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    out = Node(np.matmul(np.ascontiguousarray(a.value), np.ascontiguousarray(b.value)), (a, b), "matmul")

    def _back(g):
        # numpy only reaches BLAS for stacked products of contiguous operands
        g = np.ascontiguousarray(g)
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.ascontiguousarray(np.swapaxes(b.value, -1, -2))))
        if b.requires_grad:
            _accumulate(b, np.matmul(np.ascontiguousarray(np.swapaxes(a.value, -1, -2)), g))

    out._backward = _back
    return out


def permute(x: Node, axes: Sequence[int]) -> Node:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.value.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.value.ndim} axes")
    inverse = tuple(np.argsort(axes))
    out = Node(np.ascontiguousarray(np.transpose(x.value, axes)), (x,), "permute")
    out._backward = lambda g: _accumulate(x, np.transpose(g, inverse))
    return out


def dense(x: Node, w: Node, b: Node | None = None) -> Node:
    """``x @ W.T + b`` for a ``B x D_in`` batch and ``W`` of shape ``D_out x D_in``."""
    if x.value.ndim != 2 or w.value.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {w.shape}")
    val = x.value @ w.value.T
    parents: tuple[Node, ...] = (x, w)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"dense: bias {b.shape} does not match {w.shape[0]} outputs")
        val = val + b.value
        parents = (x, w, b)
    out = Node(val, parents, "dense")

    def _back(g):
        if x.requires_grad:
            _accumulate(x, g @ w.value)
        if w.requires_grad:
            _accumulate(w, g.T @ x.value)
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=0))

    out._backward = _back
    return out


def relu(x: Node) -> Node:
    mask = x.value > 0
    out = Node(np.where(mask, x.value, 0.0), (x,), "relu")
    out._backward = lambda g: _accumulate(x, g * mask)
    return out


def _conv_out(size: int, stride: int) -> int:
    return (size + 2 - 3) // stride + 1


def conv2d(x: Node, k: Node, b: Node | None = None, stride: int = 1) -> Node:
    """3x3 convolution with zero padding 1 on a channels-last batch.

    ``x`` is ``B x H x W x C_in``, ``k`` is ``3 x 3 x C_in x C_out``.
    """
    if x.value.ndim != 4 or k.value.ndim != 4 or k.shape[:2] != (3, 3) or k.shape[2] != x.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {k.shape}")
    bsz, h, wd, cin = x.shape
    ho, wo = _conv_out(h, stride), _conv_out(wd, stride)
    xp = np.pad(x.value, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    # win: B x Ho x Wo x C_in x 3 x 3
    kk = np.transpose(k.value, (2, 0, 1, 3))            # C_in x 3 x 3 x C_out
    val = np.tensordot(win, kk, axes=([3, 4, 5], [0, 1, 2]))
    parents: tuple[Node, ...] = (x, k)
    if b is not None:
        val = val + b.value
        parents = (x, k, b)
    out = Node(val, parents, "conv2d")

    def _back(g):
        if k.requires_grad:
            gk = np.tensordot(win, g, axes=([0, 1, 2], [0, 1, 2]))   # C_in x 3 x 3 x C_out
            _accumulate(k, np.transpose(gk, (1, 2, 0, 3)))
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 1, 2)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(3):
                for dj in range(3):
                    gxp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :] += g @ k.value[di, dj].T
            _accumulate(x, gxp[:, 1:h + 1, 1:wd + 1, :])

    out._backward = _back
    return out


def global_average_pool(x: Node) -> Node:
    """Mean over the two spatial axes of a ``B x H x W x C`` batch."""
    if x.value.ndim != 4:
        raise ShapeError("global_average_pool expects B x H x W x C")
    _, h, wd, _ = x.shape
    out = Node(x.value.mean(axis=(1, 2)), (x,), "global_average_pool")
    out._backward = lambda g: _accumulate(
        x, np.broadcast_to(g[:, None, None, :] / (h * wd), x.shape))
    return out


def reshape(x: Node, shape: Sequence[int]) -> Node:
    out = Node(x.value.reshape(shape), (x,), "reshape")
    out._backward = lambda g: _accumulate(x, g.reshape(x.shape))
    return out


def add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Node(a.value + b.value, (a, b), "add")

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, g)

    out._backward = _back
    return out


def scale(x: Node, c: float) -> Node:
    out = Node(c * x.value, (x,), "scale")
    out._backward = lambda g: _accumulate(x, c * g)
    return out


def sum_all(x: Node) -> Node:
    out = Node(x.value.sum(), (x,), "sum")
    out._backward = lambda g: _accumulate(x, np.broadcast_to(g, x.shape))
    return out


def softmax_cross_entropy(logits: Node, labels) -> Node:
    """Mean cross-entropy of a ``B x C`` logit batch against integer labels."""
    labels = np.asarray(labels)
    if logits.value.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape}, labels {labels.shape}")
    n_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    labels = labels.astype(np.int64)
    bsz = logits.shape[0]
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    loss = -logp[np.arange(bsz), labels].mean()
    out = Node(loss, (logits,), "softmax_cross_entropy")

    def _back(g):
        d = np.exp(logp)
        d[np.arange(bsz), labels] -= 1.0
        _accumulate(logits, g * d / bsz)

    out._backward = _back
    return out


# -- gradient checking -------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    per_parameter: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(build: Callable[[], Node], params: dict[str, Node], h: float = 1e-5,
               max_coords: int = 200, seed: int = 0, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    ``build`` constructs the graph from the current parameter values and
    returns a scalar node. Up to ``max_coords`` coordinates per parameter are
    sampled; the relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    for p in params.values():
        p.zero_grad()
    backward(build())
    analytic = {name: p.grad.copy() for name, p in params.items()}

    rng = np.random.default_rng(seed)
    per_param = {}
    for name, p in params.items():
        flat = p.value.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, max_coords, replace=False)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(build().value)
            flat[i] = orig - h
            fm = float(build().value)
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            ana = analytic[name].reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
        per_param[name] = worst
    return GradCheckReport(max(per_param.values(), default=0.0), per_param, tolerance)
