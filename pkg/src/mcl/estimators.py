"""scikit-learn compatible wrappers around the models and the training loop.

``fit`` builds and initializes the model, optionally pretrains the
classifier on the uncompressed signals, then trains end to end. Hyper-
parameters are constructor arguments, so ``get_params``/``set_params``/
``clone`` and grid search work as usual.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import DatasetSplit, split_train_val
from .model import (
    ClassifierSpec,
    MclModel,
    OracleModel,
    VectorModel,
    init_hosvd,
    init_pca,
    init_random,
)
from .training import TrainConfig, pretrain_oracle, train_model
from .validation import check_batch, check_labels

__all__ = ["MCLClassifier", "VectorCLClassifier", "OracleClassifier"]


class _CompressiveBase(ClassifierMixin, BaseEstimator):
    """Common ``fit``/``predict`` logic; subclasses build the model."""

    def _build(self, sample_shape, n_classes):
        raise NotImplementedError

    def _init_front(self, model, samples):
        raise NotImplementedError

    def _spec(self, n_classes):
        return ClassifierSpec(self.classifier, n_classes, tuple(self.hidden))

    def _train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, rates=tuple(self.rates),
                           boundaries=tuple(self.boundaries), weight_decay=self.weight_decay,
                           seed=self.random_state, augment=self.augment)

    def _splits(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim < 2:
            raise ValueError("X must be a batch of tensors, shape (n_samples, I_0, ...)")
        X = check_batch(X, X.shape[1:])
        self.classes_, y_idx = np.unique(np.asarray(y), return_inverse=True)
        y_idx = check_labels(y_idx.reshape(-1), X.shape[0])
        full = DatasetSplit(X, y_idx, "train", check_range=False)
        if self.validation_fraction:
            val_count = int(round(self.validation_fraction * len(full)))
            return split_train_val(full, val_count, self.random_state)
        return full, None

    def fit(self, X, y):
        train, val = self._splits(X, y)
        n_classes = len(self.classes_)
        model = self._build(train.sample_shape, n_classes)
        init_random(model, self.random_state)
        self._init_front(model, train.samples)
        if getattr(self, "pretrain_classifier", False) and not isinstance(model, OracleModel):
            oracle, self.oracle_record_ = pretrain_oracle(train, val, self._train_config(), self._spec(n_classes))
            model.load_classifier(oracle.params)
        self.record_ = train_model(model, train, val, self._train_config())
        self.model_ = model
        self.n_features_in_ = int(np.prod(train.sample_shape))
        self.sample_shape_ = train.sample_shape
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.logits(check_batch(X, self.sample_shape_))

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[self.decision_function(X).argmax(axis=1)]


class MCLClassifier(TransformerMixin, _CompressiveBase):
    """Multilinear sensing, feature synthesis and a classifier, trained end to end.

    Parameters
    ----------
    measurement_shape : tuple of int
        Extents ``M_n`` of the measurement tensor, one per signal mode.
    feature_shape : tuple of int or None
        Extents of the synthesized features; defaults to the signal shape.
    shared_weights : bool
        Read the synthesis matrices as the transposed sensing matrices.
    nonlinearity : bool
        Apply ReLU to the measurements before synthesis.
    init : {"hosvd", "random"}
        Initialization of the sensing and synthesis matrices.
    pretrain_classifier : bool
        Train the classifier on uncompressed inputs first and start from it.

    The remaining parameters configure the classifier and the optimizer.
    ``transform`` returns the synthesized feature tensors.
    """

    def __init__(self, measurement_shape=(20, 19, 2), feature_shape=None, shared_weights=False,
                 nonlinearity=False, init="hosvd", pretrain_classifier=True, classifier="mlp",
                 hidden=(512,), epochs=20, batch_size=128, rates=(1e-3, 1e-4, 1e-5),
                 boundaries=(10, 15), weight_decay=1e-4, augment=False, validation_fraction=0.1,
                 random_state=0):
        self.measurement_shape = measurement_shape
        self.feature_shape = feature_shape
        self.shared_weights = shared_weights
        self.nonlinearity = nonlinearity
        self.init = init
        self.pretrain_classifier = pretrain_classifier
        self.classifier = classifier
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.rates = rates
        self.boundaries = boundaries
        self.weight_decay = weight_decay
        self.augment = augment
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _build(self, sample_shape, n_classes):
        return MclModel(sample_shape, self.measurement_shape, self.feature_shape, self.shared_weights,
                        self.nonlinearity, self._spec(n_classes), seed=self.random_state)

    def _init_front(self, model, samples):
        if self.init == "hosvd":
            init_hosvd(model, samples, seed=self.random_state)
        elif self.init != "random":
            raise ValueError(f"init must be 'hosvd' or 'random', got {self.init!r}")

    def measure(self, X):
        """Measurement tensors ``Z``."""
        check_is_fitted(self, "model_")
        return self.model_.cs_forward(check_batch(X, self.sample_shape_))

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.features(check_batch(X, self.sample_shape_))


class VectorCLClassifier(TransformerMixin, _CompressiveBase):
    """Vector-based baseline: ``m`` measurements per channel (last mode), with
    reprojection through the transposed sensing matrices.

    ``init`` is ``"pca"`` or ``"random"``; other parameters as for
    :class:`MCLClassifier`.
    """

    def __init__(self, m=256, init="pca", pretrain_classifier=True, classifier="mlp", hidden=(512,),
                 epochs=20, batch_size=128, rates=(1e-3, 1e-4, 1e-5), boundaries=(10, 15),
                 weight_decay=1e-4, augment=False, validation_fraction=0.1,
                 random_state=0):
        self.m = m
        self.init = init
        self.pretrain_classifier = pretrain_classifier
        self.classifier = classifier
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.rates = rates
        self.boundaries = boundaries
        self.weight_decay = weight_decay
        self.augment = augment
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _build(self, sample_shape, n_classes):
        return VectorModel(sample_shape, self.m, self._spec(n_classes), seed=self.random_state)

    def _init_front(self, model, samples):
        if self.init == "pca":
            init_pca(model, samples)
        elif self.init != "random":
            raise ValueError(f"init must be 'pca' or 'random', got {self.init!r}")

    def measure(self, X):
        check_is_fitted(self, "model_")
        return self.model_.cs_forward(check_batch(X, self.sample_shape_))

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.features(check_batch(X, self.sample_shape_))


class OracleClassifier(_CompressiveBase):
    """The classifier alone on uncompressed inputs (the upper reference)."""

    def __init__(self, classifier="mlp", hidden=(512,), epochs=20, batch_size=128,
                 rates=(1e-3, 1e-4, 1e-5), boundaries=(10, 15), weight_decay=1e-4, augment=False,
                 validation_fraction=0.1, random_state=0):
        self.classifier = classifier
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.rates = rates
        self.boundaries = boundaries
        self.weight_decay = weight_decay
        self.augment = augment
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _build(self, sample_shape, n_classes):
        return OracleModel(sample_shape, self._spec(n_classes), seed=self.random_state)

    def _init_front(self, model, samples):
        pass
