"""Desk-scale directional study: which variant beats which, averaged over seeds.

Per seed the oracle classifier is trained first on the uncompressed signals
and then used as the starting classifier of every compressed variant, so all
variants see the same pretraining.
"""
from __future__ import annotations

import json
import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    DatasetSplit,
    cifar10_available,
    load_cifar10,
    split_train_val,
    subsample,
    synthetic_multilinear,
)
from .model import (
    ClassifierSpec,
    MclModel,
    VectorModel,
    init_hosvd,
    init_pca,
    init_random,
)
from .training import TrainConfig, pretrain_oracle, train_model

logger = logging.getLogger(__name__)

# Synthetic fallback: samples live near a 24 x 24 x 2 multilinear core, a bit
# wider than the 20 x 19 x 2 measurement, so every compressed variant loses
# some class information that the uncompressed oracle keeps.
SYNTHETIC_DEFAULTS = {"extents": (32, 32, 3), "n_classes": 10, "core_ranks": (24, 24, 2),
                      "noise": 0.05, "separation": 0.1, "decay": 0.0}


@dataclass(frozen=True)
class Variant:
    name: str
    framework: str                       # "mcl" or "vector"
    measurements: tuple[int, ...]
    init: str                            # "hosvd", "pca" or "random"
    nonlinearity: bool = False

    def build(self, sample_shape, classifier: ClassifierSpec, seed: int):
        if self.framework == "vector":
            return VectorModel(sample_shape, self.measurements[0], classifier, seed=seed)
        return MclModel(sample_shape, self.measurements, nonlinearity=self.nonlinearity,
                        classifier=classifier, seed=seed)


DIRECTIONAL_VARIANTS = (
    Variant("mcl_hosvd_20x19x2", "mcl", (20, 19, 2), "hosvd"),
    Variant("vector_pca_256x3", "vector", (256,), "pca"),
    Variant("mcl_random_20x19x2", "mcl", (20, 19, 2), "random"),
    Variant("mcl_linear_9x6x1", "mcl", (9, 6, 1), "hosvd"),
    Variant("mcl_relu_9x6x1", "mcl", (9, 6, 1), "hosvd", nonlinearity=True),
)

# (left, right): the left variant's mean test accuracy should be >= the right's.
DIRECTIONAL_CLAIMS = (
    ("a", "mcl_hosvd_20x19x2", "vector_pca_256x3"),
    ("b", "mcl_hosvd_20x19x2", "mcl_random_20x19x2"),
    ("c", "mcl_linear_9x6x1", "mcl_relu_9x6x1"),
) + tuple(("d", "oracle", v.name) for v in DIRECTIONAL_VARIANTS)


@dataclass
class StudySplits:
    train: DatasetSplit
    val: DatasetSplit
    test: DatasetSplit
    source: str
    augment: bool


def desk_splits(cifar_path=None, train_count: int = 10_000, val_count: int = 1_000,
                test_count: int = 2_000, seed: int = 0) -> StudySplits:
    """Seeded desk subset: ``train_count`` training samples (of which
    ``val_count`` are held out for model selection) and ``test_count`` test
    samples. CIFAR-10 is used when present, the synthetic set otherwise.
    """
    if cifar_path is not None and cifar10_available(cifar_path):
        full_train, full_test = load_cifar10(cifar_path)
        pool = subsample(full_train, train_count, seed)
        test = subsample(full_test, test_count, seed + 1)
        source, augment = "cifar10", True
    else:
        data = synthetic_multilinear(count=train_count + test_count, seed=seed, **SYNTHETIC_DEFAULTS)
        pool, test = split_train_val(data, test_count, seed + 1, ("train", "test"))
        source, augment = "synthetic", False
    train, val = split_train_val(pool, val_count, seed + 2)
    return StudySplits(train, val, test, source, augment)


@dataclass
class StudyResult:
    accuracies: dict[str, list[float]] = field(default_factory=dict)
    seconds: dict[str, list[float]] = field(default_factory=dict)
    source: str = ""

    def mean(self, name: str) -> float:
        return float(np.mean(self.accuracies[name]))

    def std(self, name: str) -> float:
        return float(np.std(self.accuracies[name]))

    def claims(self) -> list[dict]:
        rows = []
        for label, left, right in DIRECTIONAL_CLAIMS:
            if left in self.accuracies and right in self.accuracies:
                rows.append({"claim": label, "left": left, "right": right,
                             "left_mean": self.mean(left), "right_mean": self.mean(right),
                             "holds": self.mean(left) >= self.mean(right)})
        return rows

    def to_dict(self) -> dict:
        return {"source": self.source,
                "variants": {k: {"test_acc": v, "mean": self.mean(k), "std": self.std(k),
                                 "seconds": self.seconds.get(k, [])}
                             for k, v in self.accuracies.items()},
                "claims": self.claims()}


def run_directional_study(splits: StudySplits, seeds: Sequence[int] = (0, 1, 2),
                          config: TrainConfig | None = None,
                          classifier: ClassifierSpec | None = None,
                          variants: Sequence[Variant] = DIRECTIONAL_VARIANTS,
                          progress: Callable[[str, int, float], None] | None = None) -> StudyResult:
    n_classes = int(max(splits.train.labels.max(), splits.test.labels.max())) + 1
    classifier = classifier or ClassifierSpec("mlp", n_classes, (512,))
    base = config or TrainConfig.profile("desk")
    result = StudyResult(source=splits.source)

    def record(name, seed, acc, seconds):
        result.accuracies.setdefault(name, []).append(acc)
        result.seconds.setdefault(name, []).append(seconds)
        logger.info("%s seed %d test_acc %.4f (%.0fs)", name, seed, acc, seconds)
        if progress is not None:
            progress(name, seed, acc)

    for seed in seeds:
        cfg = TrainConfig(**{**base.__dict__, "seed": seed, "augment": splits.augment})
        start = time.perf_counter()
        oracle, rec = pretrain_oracle(splits.train, splits.val, cfg, classifier, splits.test)
        record("oracle", seed, rec.test_acc, time.perf_counter() - start)
        for v in variants:
            start = time.perf_counter()
            model = v.build(splits.train.sample_shape, classifier, seed)
            init_random(model, seed)
            if v.init == "hosvd":
                init_hosvd(model, splits.train.samples, seed)
            elif v.init == "pca":
                init_pca(model, splits.train.samples)
            model.load_classifier(oracle.params)
            rec = train_model(model, splits.train, splits.val, cfg, splits.test)
            record(v.name, seed, rec.test_acc, time.perf_counter() - start)
    return result


def write_study(result: StudyResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "study.json"
    path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
