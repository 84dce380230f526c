"""Mini-batch training with ADAM, the step schedule and best-validation selection."""
from __future__ import annotations

import csv
import io
import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .checkpoint import round_to_storage
from .data import DatasetSplit
from .data import augment as augment_batch
from .model import ClassifierSpec, OracleModel
from .optim import AdamState, LrSchedule, adam_step

logger = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr", "seconds")


@dataclass
class TrainConfig:
    epochs: int = 160
    batch_size: int = 128
    rates: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    boundaries: tuple[int, ...] = (80, 120)
    weight_decay: float = 1e-4
    seed: int = 0
    augment: bool = False
    # wall-clock seconds go to the metrics table only on request, so that
    # reruns produce byte-identical metrics files
    record_wall_time: bool = False

    def schedule(self) -> LrSchedule:
        return LrSchedule(tuple(self.rates), tuple(self.boundaries), self.epochs)

    @classmethod
    def profile(cls, name: str, **overrides) -> "TrainConfig":
        if name == "paper":
            base = cls()
        elif name == "desk":
            base = cls(epochs=20, boundaries=(10, 15))
        else:
            raise ValueError(f"unknown profile {name!r} (expected 'paper' or 'desk')")
        for k, v in overrides.items():
            setattr(base, k, v)
        return base


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float
    seconds: float


@dataclass
class RunRecord:
    epochs: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = -1
    # validation/test numbers of the selected weights as stored in a checkpoint
    checkpoint_val_acc: float = float("nan")
    checkpoint_val_loss: float = float("nan")
    test_acc: float = float("nan")
    test_loss: float = float("nan")
    wall_seconds: list[float] = field(default_factory=list)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.train_acc), repr(e.val_loss),
                        repr(e.val_acc), repr(e.lr), repr(e.seconds)])
        return buf.getvalue()

    def summary(self) -> dict:
        best = self.epochs[self.best_epoch] if self.epochs and self.best_epoch >= 0 else None
        return {"best_epoch": self.best_epoch,
                "best_val_acc": best.val_acc if best else None,
                "checkpoint_val_acc": self.checkpoint_val_acc,
                "checkpoint_val_loss": self.checkpoint_val_loss,
                "test_acc": self.test_acc, "test_loss": self.test_loss,
                "epochs": len(self.epochs)}


def evaluate(model, split: DatasetSplit, batch_size: int = 512) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of a frozen model."""
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    n_classes = model.classifier.spec.n_classes
    if split.labels.max() >= n_classes:
        raise ValueError(f"labels exceed the model's {n_classes} classes")
    logits = model.logits(split.samples, batch_size)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(len(split)), split.labels].mean())
    acc = float((logits.argmax(axis=1) == split.labels).mean())
    return loss, acc


def train_model(model, train: DatasetSplit, val: DatasetSplit | None, config: TrainConfig,
                test: DatasetSplit | None = None,
                on_best: Callable[[object, int], None] | None = None) -> RunRecord:
    """Train ``model`` in place and leave it holding the selected weights.

    The selected epoch is the earliest one with the highest validation
    accuracy (the last epoch when there is no validation set). The selected
    weights are rounded to checkpoint precision before the final evaluation,
    so a saved checkpoint reproduces ``checkpoint_val_acc`` and ``test_acc``
    exactly. ``on_best(model, epoch)`` is called with the rounded weights.
    """
    schedule = config.schedule()
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    record = RunRecord()
    best_acc = -np.inf
    best_params = None
    n = len(train)
    if n == 0:
        raise ValueError("training set is empty")

    for epoch in range(config.epochs):
        start = time.perf_counter()
        lr = schedule.rate(epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            x = train.samples[idx]
            if config.augment:
                x = augment_batch(x, rng)
            nodes = model.nodes()
            logits = model.graph(nodes, ag.constant(x))
            loss = ag.softmax_cross_entropy(logits, train.labels[idx])
            ag.backward(loss)
            grads = {k: nd.grad for k, nd in nodes.items()}
            adam_step(model.params, grads, state, lr, config.weight_decay)
            loss_sum += float(loss.value) * len(idx)
            correct += int((logits.value.argmax(axis=1) == train.labels[idx]).sum())
        train_loss, train_acc = loss_sum / n, correct / n
        if val is not None and len(val):
            val_loss, val_acc = evaluate(model, val)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        seconds = time.perf_counter() - start
        record.wall_seconds.append(seconds)
        record.epochs.append(EpochMetrics(epoch, train_loss, train_acc, val_loss, val_acc, lr,
                                          seconds if config.record_wall_time else 0.0))
        score = val_acc if not np.isnan(val_acc) else -np.inf
        if best_params is None or score > best_acc or np.isnan(val_acc):
            best_acc = score
            best_params = {k: v.copy() for k, v in model.params.items()}
            record.best_epoch = epoch
        logger.info("epoch %d lr=%g train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
                    epoch, lr, train_loss, train_acc, val_loss, val_acc)

    if best_params is not None:
        for k, v in round_to_storage(best_params).items():
            model.params[k] = v
    if val is not None and len(val):
        record.checkpoint_val_loss, record.checkpoint_val_acc = evaluate(model, val)
    if test is not None and len(test):
        record.test_loss, record.test_acc = evaluate(model, test)
    if on_best is not None:
        on_best(model, record.best_epoch)
    return record


def pretrain_oracle(train: DatasetSplit, val: DatasetSplit | None, config: TrainConfig,
                    classifier: ClassifierSpec, test: DatasetSplit | None = None) -> tuple[OracleModel, RunRecord]:
    """Train the classifier alone on uncompressed signals."""
    model = OracleModel(train.sample_shape, classifier, seed=config.seed)
    record = train_model(model, train, val, config, test)
    return model, record
