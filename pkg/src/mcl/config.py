"""Experiment manifests: a nested YAML document validated into dataclasses.

Example::

    dataset: {kind: synthetic, extents: [32, 32, 3], train_count: 10000, test_count: 2000}
    framework: mcl
    measurements: [20, 19, 2]
    model: {shared_weights: false, nonlinearity: false, classifier: mlp, hidden: [512]}
    init: {cs_fs: hosvd, classifier: pretrain}
    train: {profile: desk, seeds: [0, 1, 2]}
    out: runs/mcl-20x19x2
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .data import (
    DatasetSplit,
    load_cifar10,
    split_train_val,
    subsample,
    synthetic_multilinear,
)
from .model import ClassifierSpec, MclModel, OracleModel, VectorModel
from .training import TrainConfig
from .validation import check_compression, check_extents


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    kind: str = "synthetic"
    path: str | None = None
    extents: tuple[int, ...] = (32, 32, 3)
    train_count: int = 10_000
    val_count: int = 1_000
    test_count: int = 2_000
    seed: int = 0
    n_classes: int = 10
    core_ranks: tuple[int, ...] = (24, 24, 2)
    noise: float = 0.05
    separation: float = 0.1
    decay: float = 0.0


@dataclass
class ModelConfig:
    shared_weights: bool = False
    nonlinearity: bool = False
    feature_shape: tuple[int, ...] | None = None
    classifier: str = "mlp"
    hidden: tuple[int, ...] = (512,)


@dataclass
class InitConfig:
    cs_fs: str = "hosvd"
    # "random", "pretrain" (train the oracle first) or a checkpoint directory
    classifier: str = "random"


@dataclass
class TrainSection:
    profile: str = "desk"
    epochs: int | None = None
    batch_size: int | None = None
    rates: tuple[float, ...] | None = None
    boundaries: tuple[int, ...] | None = None
    weight_decay: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2)
    augment: bool | None = None
    record_wall_time: bool = False


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    framework: str = "mcl"
    measurements: tuple[int, ...] = (20, 19, 2)
    model: ModelConfig = field(default_factory=ModelConfig)
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainSection = field(default_factory=TrainSection)
    out: str = "runs/experiment"

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict[str, Any] | None) -> "ExperimentConfig":
        raw = dict(raw or {})
        sections = {"dataset": DatasetConfig, "model": ModelConfig, "init": InitConfig,
                    "train": TrainSection}
        kwargs = {}
        for key, value in raw.items():
            if key in sections:
                kwargs[key] = _build(sections[key], value or {}, key)
            elif key in ("framework", "measurements", "out"):
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        cfg = cls(**kwargs)
        cfg._normalize()
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw)

    def _normalize(self) -> None:
        d = self.dataset
        d.extents = tuple(int(v) for v in d.extents)
        d.core_ranks = tuple(int(v) for v in d.core_ranks)
        self.measurements = tuple(int(v) for v in self.measurements)
        m = self.model
        m.hidden = tuple(int(v) for v in m.hidden)
        if m.feature_shape is not None:
            m.feature_shape = tuple(int(v) for v in m.feature_shape)
        t = self.train
        t.seeds = tuple(int(v) for v in t.seeds)
        if t.rates is not None:
            t.rates = tuple(float(v) for v in t.rates)
        if t.boundaries is not None:
            t.boundaries = tuple(int(v) for v in t.boundaries)

    def validate(self) -> None:
        d = self.dataset
        if d.kind not in ("cifar10", "synthetic"):
            raise ConfigError(f"dataset.kind must be cifar10 or synthetic, got {d.kind!r}")
        if d.kind == "cifar10":
            if not d.path:
                raise ConfigError("dataset.path is required for cifar10")
            if d.extents != (32, 32, 3):
                raise ConfigError("cifar10 images are 32 x 32 x 3")
        check_extents(d.extents, "dataset.extents")
        if d.val_count >= d.train_count or min(d.val_count, d.test_count) < 1:
            raise ConfigError("need 1 <= val_count < train_count and test_count >= 1")
        if self.framework not in ("mcl", "vector", "oracle"):
            raise ConfigError(f"framework must be mcl, vector or oracle, got {self.framework!r}")
        if self.framework == "mcl":
            if len(self.measurements) != len(d.extents):
                raise ConfigError(f"measurements {self.measurements} need {len(d.extents)} modes")
            check_compression(d.extents, self.measurements, strict=True)
        elif self.framework == "vector":
            pixels = math.prod(d.extents[:-1])
            if len(self.measurements) != 1 or not 1 <= self.measurements[0] < pixels:
                raise ConfigError(f"vector measurements must be a single m in [1, {pixels})")
        if self.init.cs_fs not in ("hosvd", "pca", "random"):
            raise ConfigError(f"init.cs_fs must be hosvd, pca or random, got {self.init.cs_fs!r}")
        if self.framework == "mcl" and self.init.cs_fs == "pca":
            raise ConfigError("pca initialization applies to the vector framework")
        if self.framework == "vector" and self.init.cs_fs == "hosvd":
            raise ConfigError("hosvd initialization applies to the mcl framework")
        if not self.train.seeds:
            raise ConfigError("train.seeds must not be empty")
        self.train_config(self.train.seeds[0]).schedule()   # raises on schedule errors
        self.classifier_spec()

    # -- derived objects --------------------------------------------------------

    def classifier_spec(self) -> ClassifierSpec:
        return ClassifierSpec(self.model.classifier, self.dataset.n_classes, self.model.hidden)

    def train_config(self, seed: int) -> TrainConfig:
        t = self.train
        overrides = {k: getattr(t, k) for k in ("epochs", "batch_size", "rates", "boundaries",
                                                 "weight_decay", "augment")
                     if getattr(t, k) is not None}
        if "augment" not in overrides:
            overrides["augment"] = self.dataset.kind == "cifar10"
        try:
            return TrainConfig.profile(t.profile, seed=seed, record_wall_time=t.record_wall_time,
                                       **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_model(self, seed: int):
        shape = self.dataset.extents
        spec = self.classifier_spec()
        if self.framework == "mcl":
            return MclModel(shape, self.measurements, self.model.feature_shape, self.model.shared_weights,
                            self.model.nonlinearity, spec, seed=seed)
        if self.framework == "vector":
            return VectorModel(shape, self.measurements[0], spec, seed=seed)
        return OracleModel(shape, spec, seed=seed)

    def splits(self) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
        """``(train, val, test)``; depends only on the dataset section."""
        d = self.dataset
        if d.kind == "cifar10":
            full_train, full_test = load_cifar10(d.path)
            pool = subsample(full_train, d.train_count, d.seed)
            test = subsample(full_test, d.test_count, d.seed + 1)
        else:
            data = synthetic_multilinear(d.extents, d.n_classes, d.core_ranks, d.noise,
                                         d.train_count + d.test_count, d.seed, d.separation, d.decay)
            pool, test = split_train_val(data, d.test_count, d.seed + 1, ("train", "test"))
        train, val = split_train_val(pool, d.val_count, d.seed + 2)
        return train, val, test

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _build(cls, values: dict, section: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{section} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")
    return cls(**values)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def set_override(raw: dict, dotted: str, value: str) -> None:
    """Apply a ``section.key=value`` override (value parsed as YAML) to a raw mapping."""
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted}: {k} is not a section")
    node[keys[-1]] = yaml.safe_load(value)
