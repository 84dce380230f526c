"""Input checks shared by the models, estimators and CLI."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .tensor import ShapeError


def check_extents(values, name: str = "extents") -> tuple[int, ...]:
    try:
        out = tuple(int(v) for v in values)
    except TypeError:
        raise ValueError(f"{name} must be a sequence of integers, got {values!r}") from None
    if not out or any(v < 1 for v in out):
        raise ValueError(f"{name} must be non-empty positive integers, got {out}")
    return out


def check_compression(signal: Sequence[int], measurements: Sequence[int], strict: bool = True) -> None:
    """Every measurement extent must fit inside its signal extent.

    With ``strict`` the total measurement count must also be below the signal
    size; models accept the full-rank case so it can be used as a reference.
    """
    if len(signal) != len(measurements):
        raise ShapeError(
            f"measurement shape {tuple(measurements)} has {len(measurements)} modes, "
            f"signal {tuple(signal)} has {len(signal)}"
        )
    for n, (i, m) in enumerate(zip(signal, measurements)):
        if m > i:
            raise ShapeError(f"mode {n}: measurement extent {m} exceeds signal extent {i}")
    if strict and int(np.prod(measurements)) >= int(np.prod(signal)):
        raise ShapeError(
            f"measurement shape {tuple(measurements)} does not compress signal {tuple(signal)}"
        )


def check_batch(x, sample_shape: Sequence[int], name: str = "X") -> np.ndarray:
    """Return ``x`` as a float64 ``B x sample_shape`` batch.

    A single sample of exactly ``sample_shape`` is promoted to a batch of one.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    sample_shape = tuple(sample_shape)
    if x.shape == sample_shape:
        x = x[None]
    if x.shape[1:] != sample_shape:
        raise ShapeError(f"{name}: expected samples of shape {sample_shape}, got {x.shape[1:]}")
    if x.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_labels(y, n_samples: int, n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise ShapeError(f"expected {n_samples} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if n_classes is not None and y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y
