"""Datasets: CIFAR-10 binary batches, a synthetic multilinear generator,
seeded splits and training-time augmentation.

Randomness comes from numpy's ``PCG64`` generator (``default_rng``), which is
specified and reproducible across platforms for a given seed.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import InitVar, dataclass
from pathlib import Path

import numpy as np

from .tensor import multi_mode_product
from .validation import check_extents

RECORD_BYTES = 1 + 3 * 32 * 32
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"


class DatasetError(ValueError):
    pass


@dataclass
class DatasetSplit:
    """``samples`` is ``S x I_0 x ... x I_{N-1}`` in [0, 1]; ``labels`` has length S."""

    samples: np.ndarray
    labels: np.ndarray
    role: str = "train"
    seed: int | None = None
    check_range: InitVar[bool] = True

    def __post_init__(self, check_range):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.samples.shape[0],):
            raise DatasetError(f"{len(self.labels)} labels for {self.samples.shape[0]} samples")
        if check_range and self.samples.size and (self.samples.min() < 0.0 or self.samples.max() > 1.0):
            raise DatasetError("sample values must lie in [0, 1]")
        if self.labels.size and self.labels.min() < 0:
            raise DatasetError("labels must be non-negative")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.samples.shape[1:]

    def subset(self, idx, role: str | None = None) -> "DatasetSplit":
        idx = np.asarray(idx, dtype=np.int64)
        return DatasetSplit(self.samples[idx], self.labels[idx], role or self.role, self.seed,
                            check_range=False)


# -- CIFAR-10 ---------------------------------------------------------------

def read_cifar_records(path, n_classes: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Parse one binary batch file into ``(images, labels)``.

    Each 3073-byte record is a label byte followed by the red, green and blue
    1024-byte planes; images come back ``S x 32 x 32 x 3`` scaled by 1/255.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing batch file {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % RECORD_BYTES:
        count = raw.size // RECORD_BYTES
        raise DatasetError(
            f"{path}: truncated record at offset {count * RECORD_BYTES} "
            f"({raw.size} bytes is not a multiple of {RECORD_BYTES})"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= n_classes)
    if bad.size:
        raise DatasetError(
            f"{path}: label {labels[bad[0]]} >= {n_classes} in record at offset {bad[0] * RECORD_BYTES}"
        )
    images = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(images, dtype=np.float64) / 255.0, labels


def load_cifar10(path) -> tuple[DatasetSplit, DatasetSplit]:
    """Load the five training batches and the test batch from ``path``."""
    path = Path(path)
    parts = [read_cifar_records(path / name) for name in TRAIN_FILES]
    train = DatasetSplit(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                         "train")
    test_x, test_y = read_cifar_records(path / TEST_FILE)
    return train, DatasetSplit(test_x, test_y, "test")


def cifar10_available(path) -> bool:
    if path is None:
        return False
    path = Path(path)
    return all((path / name).is_file() for name in TRAIN_FILES + (TEST_FILE,))


# -- splits ------------------------------------------------------------------

def split_train_val(split: DatasetSplit, val_count: int, seed: int,
                    roles: tuple[str, str] = ("train", "val")) -> tuple[DatasetSplit, DatasetSplit]:
    """Seeded disjoint split; both parts keep the original sample order."""
    n = len(split)
    if not 0 <= val_count <= n:
        raise ValueError(f"val_count={val_count} must lie in [0, {n}]")
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = np.sort(perm[:val_count])
    train_idx = np.sort(perm[val_count:])
    first = split.subset(train_idx, roles[0])
    second = split.subset(val_idx, roles[1])
    first.seed = second.seed = seed
    return first, second


def subsample(split: DatasetSplit, count: int, seed: int) -> DatasetSplit:
    """A seeded random subset of ``count`` samples (original order kept)."""
    if count >= len(split):
        return split
    _, part = split_train_val(split, count, seed, roles=(split.role, split.role))
    return part


# -- augmentation ------------------------------------------------------------

def flip_horizontal(images: np.ndarray) -> np.ndarray:
    """Mirror along the width axis (axis 2 of ``B x H x W [x C]``, axis 1 of one image)."""
    axis = 2 if images.ndim == 4 else 1
    return np.flip(images, axis=axis).copy()


def shift_image(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate one ``H x W [x C]`` image by ``(dy, dx)`` pixels with zero fill."""
    out = np.zeros_like(image)
    h, w = image.shape[:2]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = image[src_y, src_x]
    return out


def augment(batch: np.ndarray, seed, flip_prob: float = 0.5, shift_fraction: float = 0.1) -> np.ndarray:
    """Random horizontal flip plus an integer shift per spatial axis.

    Shifts are drawn uniformly from ``[-floor(f*H), floor(f*H)]`` (and the same
    for width) independently per sample. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim < 3:
        raise ValueError("augment expects B x H x W [x C] images")
    h, w = batch.shape[1:3]
    max_dy, max_dx = int(np.floor(shift_fraction * h)), int(np.floor(shift_fraction * w))
    n = batch.shape[0]
    flips = rng.random(n) < flip_prob
    dys = rng.integers(-max_dy, max_dy + 1, size=n)
    dxs = rng.integers(-max_dx, max_dx + 1, size=n)
    out = np.empty_like(batch)
    for i in range(n):
        img = batch[i, :, ::-1] if flips[i] else batch[i]
        out[i] = shift_image(img, int(dys[i]), int(dxs[i]))
    return out


# -- synthetic data ----------------------------------------------------------

def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def core_profile(core_ranks: Sequence[int], decay: float) -> np.ndarray:
    """Entry scales ``prod_n exp(-decay * j_n / J_n)`` of the core tensor."""
    axes = [np.exp(-decay * np.arange(j) / j) for j in core_ranks]
    out = axes[0]
    for a in axes[1:]:
        out = np.multiply.outer(out, a)
    return out


def _draw_cores(extents, n_classes, core_ranks, count, seed, separation, decay=0.0):
    extents = check_extents(extents, "extents")
    core_ranks = check_extents(core_ranks, "core_ranks")
    if len(core_ranks) != len(extents) or any(j > i for i, j in zip(extents, core_ranks)):
        raise ValueError(f"core ranks {core_ranks} incompatible with extents {extents}")
    if count < 1 or n_classes < 1:
        raise ValueError("count and n_classes must be positive")
    rng = np.random.default_rng(seed)
    factors = [_orthonormal(rng, i, j) for i, j in zip(extents, core_ranks)]
    means = separation * rng.standard_normal((n_classes, *core_ranks))
    labels = rng.permutation(np.arange(count) % n_classes)
    cores = means[labels] + rng.standard_normal((count, *core_ranks))
    if decay:
        cores *= core_profile(core_ranks, decay)
    return rng, factors, cores, labels


def synthetic_multilinear(extents: Sequence[int], n_classes: int, core_ranks: Sequence[int],
                          noise: float, count: int, seed: int, separation: float = 1.0,
                          decay: float = 0.0, spread: float = 6.0) -> DatasetSplit:
    """Samples lying (up to small terms) in a low-dimensional multilinear subspace.

    Fixed orthonormal factors ``Psi_n`` (``I_n x J_n``) are drawn once. Each
    class gets a Gaussian mean core with entry std ``separation``; a sample is
    ``P * (class mean + standard normal core) x_0 Psi_0 ... x_{N-1} Psi_{N-1}``
    plus ``noise * N(0, 1)``, where ``P = core_profile(core_ranks, decay)``
    scales core entry ``(j_0, ..., j_{N-1})`` by ``prod_n exp(-decay j_n / J_n)``.
    A positive ``decay`` gives every mode a falling spectrum, as in natural
    images; every core entry keeps the same class-to-spread ratio.

    The set is standardized and mapped to ``0.5 + x / spread``, clipped to
    [0, 1] (``spread = 6`` clips about 0.3% of the entries). Labels are
    balanced (``count // n_classes`` each, remainder to the lowest classes)
    and shuffled.
    """
    rng, factors, cores, labels = _draw_cores(extents, n_classes, core_ranks, count, seed, separation, decay)
    samples = multi_mode_product(cores, factors, first_mode=1)
    if noise:
        samples += noise * rng.standard_normal(samples.shape)
    std = samples.std()
    samples = 0.5 + (samples - samples.mean()) / (spread * std) if std > 0 else np.full_like(samples, 0.5)
    return DatasetSplit(np.clip(samples, 0.0, 1.0), labels, "train", seed)


def synthetic_cores(extents: Sequence[int], n_classes: int, core_ranks: Sequence[int],
                    count: int, seed: int, separation: float = 1.0,
                    decay: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth cores and labels behind :func:`synthetic_multilinear`
    for the same arguments."""
    _, _, cores, labels = _draw_cores(extents, n_classes, core_ranks, count, seed, separation, decay)
    return cores, labels
