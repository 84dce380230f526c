"""Checkpoint directories: ``manifest.json`` plus one raw tensor file each.

Each tensor is stored as little-endian 32-bit floats in row-major order. The
manifest lists name, shape, element type, byte order and file name, and
carries the model configuration needed to rebuild the model. Writing is
deterministic, so save -> load -> save reproduces identical bytes.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .model import model_from_config

FORMAT = "mcl-checkpoint/1"
_DTYPE = np.dtype("<f4")


def _file_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name) + ".f32"


def save_tensors(directory, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    """Write ``tensors`` (in the given order) and ``meta`` to ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype=_DTYPE)
        fname = _file_name(name)
        (directory / fname).write_bytes(arr.tobytes(order="C"))
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32",
                        "byte_order": "little", "file": fname})
    manifest = {"format": FORMAT, "meta": meta or {}, "tensors": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_tensors(directory) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(tensors, meta)``; tensors are widened to float64."""
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json in {directory}")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported format {manifest.get('format')!r}")
    tensors = {}
    for e in manifest["tensors"]:
        if e["dtype"] != "float32" or e["byte_order"] != "little":
            raise ValueError(f"{path}: tensor {e['name']} has unsupported encoding")
        raw = (directory / e["file"]).read_bytes()
        shape = tuple(e["shape"])
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if len(raw) != expected:
            raise ValueError(f"{directory / e['file']}: {len(raw)} bytes, expected {expected}")
        tensors[e["name"]] = np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(np.float64)
    return tensors, manifest.get("meta", {})


def save_model(model, directory, extra: dict | None = None) -> Path:
    meta = {"model": model.config()}
    if extra:
        meta["extra"] = extra
    return save_tensors(directory, model.params, meta)


def load_model(directory):
    tensors, meta = load_tensors(directory)
    if "model" not in meta:
        raise ValueError(f"{directory}: checkpoint has no model configuration")
    model = model_from_config(meta["model"])
    if set(tensors) != set(model.params):
        raise ValueError(f"{directory}: tensors {sorted(tensors)} do not match model {sorted(model.params)}")
    for name, value in tensors.items():
        if value.shape != model.params[name].shape:
            raise ValueError(f"{directory}: {name} has shape {value.shape}, expected {model.params[name].shape}")
        model.params[name] = value
    return model


def round_to_storage(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Values exactly as a save/load round trip would return them."""
    return {k: np.asarray(v, dtype=_DTYPE).astype(np.float64) for k, v in params.items()}
