"""Binary PPM/PGM writers for synthesized feature tensors."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def to_bytes(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], scale by 255 and round to the nearest byte."""
    return np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pnm(path, image: np.ndarray) -> Path:
    """Write ``H x W x 3`` as P6 or ``H x W`` / ``H x W x 1`` as P5."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write an image of shape {image.shape}")
    h, w = image.shape[:2]
    path = Path(path)
    path.write_bytes(magic + f"\n{w} {h}\n255\n".encode("ascii") + to_bytes(image).tobytes())
    return path


def read_pnm(path) -> np.ndarray:
    """Inverse of :func:`write_pnm` (for files written by it); returns bytes."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    magic, dims, maxval, body = parts
    w, h = (int(v) for v in dims.split())
    if maxval != b"255" or magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM header")
    shape = (h, w, 3) if magic == b"P6" else (h, w)
    return np.frombuffer(body, dtype=np.uint8).reshape(shape)


def export_feature(directory, stem: str, feature: np.ndarray) -> list[Path]:
    """Image file(s) plus a raw little-endian float32 dump of ``feature``.

    A 2-D feature, or a 3-D one with 1 or 3 channels, becomes one image; any
    other channel count is written as one greyscale image per channel.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    feature = np.asarray(feature, dtype=np.float64)
    raw = directory / f"{stem}.f32"
    raw.write_bytes(np.ascontiguousarray(feature, dtype="<f4").tobytes())
    written = [raw]
    if feature.ndim == 2 or (feature.ndim == 3 and feature.shape[2] in (1, 3)):
        ext = "ppm" if feature.ndim == 3 and feature.shape[2] == 3 else "pgm"
        written.append(write_pnm(directory / f"{stem}.{ext}", feature))
    elif feature.ndim == 3:
        for c in range(feature.shape[2]):
            written.append(write_pnm(directory / f"{stem}_c{c}.pgm", feature[:, :, c]))
    else:
        raise ValueError(f"features of shape {feature.shape} have no image form")
    return written
