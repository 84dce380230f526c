"""Multilinear compressive learning: separable sensing, feature synthesis and
end-to-end training, with a vector-based baseline and cost accounting."""

from .estimators import MCLClassifier, OracleClassifier, VectorCLClassifier
from .model import (
    ClassifierSpec,
    MclModel,
    OracleModel,
    VectorModel,
    init_hosvd,
    init_pca,
    init_random,
)
from .tensor import (
    ShapeError,
    fold,
    hosvd_factors,
    kronecker,
    mode_n_product,
    pca_basis,
    pinv,
    truncated_svd,
    unfold,
    vec,
)

__version__ = "0.1.0"

__all__ = [
    "MCLClassifier",
    "VectorCLClassifier",
    "OracleClassifier",
    "ClassifierSpec",
    "MclModel",
    "VectorModel",
    "OracleModel",
    "init_hosvd",
    "init_pca",
    "init_random",
    "ShapeError",
    "vec",
    "kronecker",
    "mode_n_product",
    "unfold",
    "fold",
    "truncated_svd",
    "hosvd_factors",
    "pca_basis",
    "pinv",
]
