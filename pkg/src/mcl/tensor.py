"""Dense tensor algebra: mode-n products, unfoldings, Kronecker products and
the small set of decompositions used for initialization.

Tensors are plain C-ordered ``float64`` numpy arrays, so ``vec`` is row-major
(last index fastest). Under that convention

    vec(X x_0 W_0 x_1 W_1 ... ) == kron(W_0, W_1, ...) @ vec(X)

holds with the factors in natural order. Modes are 0-based axes.
"""
from __future__ import annotations

import contextlib
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import reduce
from typing import NamedTuple

import numpy as np

__all__ = [
    "ShapeError",
    "SvdResult",
    "as_tensor",
    "vec",
    "kronecker",
    "kron_all",
    "mode_n_product",
    "multi_mode_product",
    "unfold",
    "fold",
    "truncated_svd",
    "hosvd_factors",
    "pca_basis",
    "pinv",
    "count_macs",
]


class ShapeError(ValueError):
    """Raised when operand extents are inconsistent."""


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array with at least one mode."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ShapeError("a tensor needs at least one mode")
    if 0 in arr.shape:
        raise ShapeError(f"every extent must be >= 1, got {arr.shape}")
    return arr


def vec(x) -> np.ndarray:
    """Row-major vectorization."""
    return as_tensor(x).reshape(-1)


def kronecker(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("kronecker expects two matrices")
    m, n = a.shape
    p, q = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(m * p, n * q)


def kron_all(factors: Sequence[np.ndarray]) -> np.ndarray:
    """``factors[0] (x) factors[1] (x) ...``"""
    return reduce(kronecker, factors)


# -- multiply accounting -----------------------------------------------------

@dataclass
class _MacCounter:
    total: int = 0
    calls: int = 0


_active_counters: list[_MacCounter] = []


@contextlib.contextmanager
def count_macs() -> Iterator[_MacCounter]:
    """Count scalar multiplies performed by :func:`mode_n_product` in the block.

    Each output element of a mode-n product costs ``I_n`` multiplies.
    """
    counter = _MacCounter()
    _active_counters.append(counter)
    try:
        yield counter
    finally:
        _active_counters.remove(counter)


def mode_n_product(x, w, mode: int) -> np.ndarray:
    """Mode-``mode`` product ``X x_mode W``.

    ``W`` has shape ``(J, I_mode)``; the result replaces extent ``I_mode``
    with ``J``. Element-wise this is ``sum_i X[..., i, ...] * W[j, i]``.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"mode {mode}: factor must be a matrix, got ndim={w.ndim}")
    if not 0 <= mode < x.ndim:
        raise ShapeError(f"mode {mode} out of range for a {x.ndim}-mode tensor")
    if w.shape[1] != x.shape[mode]:
        raise ShapeError(
            f"mode {mode}: factor has {w.shape[1]} columns but the tensor "
            f"extent is {x.shape[mode]}"
        )
    out = np.tensordot(x, w, axes=([mode], [1]))
    out = np.ascontiguousarray(np.moveaxis(out, -1, mode))
    for c in _active_counters:
        c.total += out.size * w.shape[1]
        c.calls += 1
    return out


def multi_mode_product(x, factors: Sequence[np.ndarray], first_mode: int = 0) -> np.ndarray:
    """Apply ``factors[k]`` along mode ``first_mode + k`` in ascending order."""
    out = np.asarray(x, dtype=np.float64)
    for k, w in enumerate(factors):
        out = mode_n_product(out, w, first_mode + k)
    return out


def unfold(x, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding, ``I_mode x prod(other extents)``.

    Columns follow the remaining indices in row-major order.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= mode < x.ndim:
        raise ShapeError(f"mode {mode} out of range for a {x.ndim}-mode tensor")
    return np.ascontiguousarray(np.moveaxis(x, mode, 0).reshape(x.shape[mode], -1))


def fold(m, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ShapeError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1:]
    expected = (shape[mode], int(np.prod(rest, dtype=np.int64)))
    if m.shape != expected:
        raise ShapeError(f"cannot fold a {m.shape} matrix into {shape} along mode {mode}")
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode))


# -- decompositions ----------------------------------------------------------

class SvdResult(NamedTuple):
    """Thin SVD ``A ~= U @ diag(s) @ V.T``; columns of ``U`` and ``V`` orthonormal."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


def _gram_eig(gram: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # top-k eigenpairs of a symmetric PSD matrix, descending, stable on ties
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(-evals, kind="stable")[:k]
    s = np.sqrt(np.clip(evals[order], 0.0, None))
    return s, np.ascontiguousarray(evecs[:, order])


def _sign_of_max(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return signs


def truncated_svd(a, k: int) -> SvdResult:
    """Top-``k`` singular triplets of ``a``.

    Computed from the symmetric eigendecomposition of the smaller Gram matrix
    (``A^T A`` or ``A A^T``); the other side is recovered by projection and
    re-orthonormalized. Deterministic for a fixed input, with signs fixed so
    the largest-magnitude entry of every left singular vector is non-negative.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError("truncated_svd expects a matrix")
    rows, cols = a.shape
    if not 1 <= k <= min(rows, cols):
        raise ValueError(f"rank k={k} must lie in [1, {min(rows, cols)}]")

    transpose = rows < cols
    b = a.T if transpose else a          # tall; the Gram matrix is the small side
    s, small = _gram_eig(b.T @ b, k)

    other = b @ small
    tiny = s <= s[0] * 1e-12 if s[0] > 0 else np.ones_like(s, dtype=bool)
    other[:, ~tiny] /= s[~tiny]
    # QR fills null directions and removes drift; diag(r) > 0 keeps the rest
    q, r = np.linalg.qr(other)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    other = q * d
    s = np.where(tiny, 0.0, s)

    u, v = (small, other) if transpose else (other, small)
    signs = _sign_of_max(u)
    return SvdResult(np.ascontiguousarray(u * signs), s, np.ascontiguousarray(v * signs))


def _leading_left_vectors(a: np.ndarray, k: int) -> np.ndarray:
    # U of truncated_svd without forming V; used when V would be huge
    if a.shape[0] > a.shape[1]:
        return truncated_svd(a, k).U
    _, u = _gram_eig(a @ a.T, k)
    return u * _sign_of_max(u)


def hosvd_factors(samples, ranks: Sequence[int]) -> list[np.ndarray]:
    """Per-mode HOSVD bases of a sample batch.

    ``samples`` has shape ``(S, I_0, ..., I_{N-1})``. For every signal mode
    the batch is unfolded along that mode (the sample index joins the
    columns) and the top ``ranks[n]`` left singular vectors are returned
    transposed, i.e. as an ``ranks[n] x I_n`` matrix with orthonormal rows.
    """
    samples = np.asarray(samples, dtype=np.float64)
    extents = samples.shape[1:]
    if samples.ndim < 2 or samples.shape[0] < 1:
        raise ShapeError("samples need a leading sample mode and at least one signal mode")
    if len(ranks) != len(extents):
        raise ShapeError(f"got {len(ranks)} ranks for {len(extents)} signal modes")
    factors = []
    for n, (extent, rank) in enumerate(zip(extents, ranks)):
        if not 1 <= rank <= extent:
            raise ValueError(f"mode {n}: rank {rank} must lie in [1, {extent}]")
        u = _leading_left_vectors(unfold(samples, n + 1), rank)
        factors.append(np.ascontiguousarray(u.T))
    return factors


def pca_basis(vectors, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` principal directions of an ``S x D`` sample matrix.

    Returns ``(basis, mean)`` where ``basis`` is ``k x D`` with orthonormal
    rows computed on mean-centred data.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ShapeError("pca_basis expects an S x D matrix")
    d = vectors.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must lie in [1, {d}]")
    mean = vectors.mean(axis=0)
    centred = vectors - mean
    if centred.shape[0] < k:
        # fewer samples than requested directions: pad with zero rows so the
        # SVD still has k right singular vectors (extra ones span the null space)
        centred = np.vstack([centred, np.zeros((k - centred.shape[0], d))])
    basis = _leading_left_vectors(centred.T, k).T
    return np.ascontiguousarray(basis), mean


def pinv(a, rcond: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below ``rcond * s_max`` drop."""
    a = np.asarray(a, dtype=np.float64)
    k = min(a.shape)
    u, s, v = truncated_svd(a, k)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    return (v[:, keep] / s[keep]) @ u[:, keep].T
