"""The multilinear compressive learning pipeline and its vector-based baseline.

Both models keep every trainable array in one ordered ``params`` dict; a
forward pass wraps those arrays in tape nodes, so an optimizer updating the
arrays in place updates the model. Batches carry a leading sample axis.

Parameter names:

* ``phi{n}`` - mode-n sensing matrix ``M_n x I_n`` (MCL), or ``phi`` stacked
  per-channel sensing matrices ``C x m x D`` (vector);
* ``theta{n}`` - mode-n synthesis matrix ``T_n x M_n`` (MCL, separate weights);
* ``clf.*`` - classifier layers.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from . import tensor as tcore
from .autograd import Node
from .tensor import ShapeError
from .validation import check_batch, check_compression, check_extents

__all__ = [
    "ClassifierSpec",
    "Classifier",
    "OracleModel",
    "MclModel",
    "VectorModel",
    "glorot_uniform",
    "init_random",
    "init_hosvd",
    "init_pca",
    "model_from_config",
]


def glorot_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=tuple(shape))


# -- classifier --------------------------------------------------------------

@dataclass(frozen=True)
class ClassifierSpec:
    """Task network on top of the feature tensor.

    ``variant`` is ``"linear"`` (softmax regression), ``"mlp"`` (ReLU hidden
    layers of sizes ``hidden``) or ``"convnet"`` (3x3 convolutions with the
    given strides/channels, global average pooling and a dense output).
    """

    variant: str = "mlp"
    n_classes: int = 10
    hidden: tuple[int, ...] = (512,)
    conv_channels: tuple[int, ...] = (32, 32, 64)
    conv_strides: tuple[int, ...] = (1, 2, 2)

    def __post_init__(self):
        if self.variant not in ("linear", "mlp", "convnet"):
            raise ValueError(f"unknown classifier variant {self.variant!r}")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "conv_strides", tuple(int(s) for s in self.conv_strides))
        if len(self.conv_channels) != len(self.conv_strides):
            raise ValueError("conv_channels and conv_strides must have equal length")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


class Classifier:
    """Builds and runs the classifier layers for a fixed input shape."""

    def __init__(self, spec: ClassifierSpec, input_shape: Sequence[int]):
        self.spec = spec
        self.input_shape = check_extents(input_shape, "classifier input shape")
        if spec.variant == "convnet" and len(self.input_shape) not in (2, 3):
            raise ShapeError(f"convnet needs a 2- or 3-mode input, got {self.input_shape}")

    def param_shapes(self) -> list[tuple[str, tuple[int, ...], int, int]]:
        """``(name, shape, fan_in, fan_out)`` in initialization order; biases have fans 0."""
        spec = self.spec
        out = []
        if spec.variant == "convnet":
            cin = self.input_shape[2] if len(self.input_shape) == 3 else 1
            for i, cout in enumerate(spec.conv_channels):
                out.append((f"clf.conv{i}.K", (3, 3, cin, cout), 9 * cin, 9 * cout))
                out.append((f"clf.conv{i}.b", (cout,), 0, 0))
                cin = cout
            out.append(("clf.out.W", (spec.n_classes, cin), cin, spec.n_classes))
            out.append(("clf.out.b", (spec.n_classes,), 0, 0))
            return out
        d = int(np.prod(self.input_shape))
        hidden = spec.hidden if spec.variant == "mlp" else ()
        for i, h in enumerate(hidden):
            out.append((f"clf.dense{i}.W", (h, d), d, h))
            out.append((f"clf.dense{i}.b", (h,), 0, 0))
            d = h
        out.append(("clf.out.W", (spec.n_classes, d), d, spec.n_classes))
        out.append(("clf.out.b", (spec.n_classes,), 0, 0))
        return out

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        params = {}
        for name, shape, fan_in, fan_out in self.param_shapes():
            if fan_in:
                params[name] = glorot_uniform(rng, shape, fan_in, fan_out)
            else:
                params[name] = np.zeros(shape)
        return params

    def graph(self, nodes: dict[str, Node], t: Node) -> Node:
        spec = self.spec
        bsz = t.shape[0]
        if spec.variant == "convnet":
            x = t if len(self.input_shape) == 3 else ag.reshape(t, (bsz, *self.input_shape, 1))
            for i, stride in enumerate(spec.conv_strides):
                x = ag.relu(ag.conv2d(x, nodes[f"clf.conv{i}.K"], nodes[f"clf.conv{i}.b"], stride))
            x = ag.global_average_pool(x)
        else:
            x = ag.reshape(t, (bsz, -1))
            hidden = spec.hidden if spec.variant == "mlp" else ()
            for i in range(len(hidden)):
                x = ag.relu(ag.dense(x, nodes[f"clf.dense{i}.W"], nodes[f"clf.dense{i}.b"]))
        return ag.dense(x, nodes["clf.out.W"], nodes["clf.out.b"])


# -- models ------------------------------------------------------------------

class _Model:
    """Shared plumbing: parameter storage, tape construction, batched inference."""

    kind = "base"
    input_shape: tuple[int, ...]
    feature_shape: tuple[int, ...]
    classifier: Classifier
    params: dict[str, np.ndarray]

    def _shapes(self) -> list[tuple[str, tuple[int, ...], int, int]]:
        raise NotImplementedError

    def _init_front(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        params = {}
        for name, shape, fan_in, fan_out in self._shapes():
            params[name] = glorot_uniform(rng, shape, fan_in, fan_out)
        return params

    def nodes(self, trainable: bool = True) -> dict[str, Node]:
        make = ag.parameter if trainable else ag.constant
        return {name: make(value) for name, value in self.params.items()}

    def features_graph(self, nodes: dict[str, Node], x: Node) -> Node:
        raise NotImplementedError

    def graph(self, nodes: dict[str, Node], x: Node) -> Node:
        """Logits node for a batch node ``x``."""
        return self.classifier.graph(nodes, self.features_graph(nodes, x))

    def _batched(self, fn, x, batch_size: int) -> np.ndarray:
        x = check_batch(x, self.input_shape)
        nodes = self.nodes(trainable=False)
        outs = [fn(nodes, ag.constant(x[i:i + batch_size])).value
                for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(outs, axis=0)

    def logits(self, x, batch_size: int = 512) -> np.ndarray:
        return self._batched(self.graph, x, batch_size)

    def features(self, x, batch_size: int = 512) -> np.ndarray:
        """Feature tensors ``T`` fed to the classifier."""
        return self._batched(self.features_graph, x, batch_size)

    def classifier_params(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if k.startswith("clf.")}

    def load_classifier(self, weights: dict[str, np.ndarray]) -> None:
        """Copy ``clf.*`` weights (e.g. from a pretrained oracle) into this model."""
        own = self.classifier_params()
        given = {k: v for k, v in weights.items() if k.startswith("clf.")}
        if set(own) != set(given):
            raise ValueError(f"classifier layers differ: {sorted(own)} vs {sorted(given)}")
        for k, v in given.items():
            if own[k].shape != np.shape(v):
                raise ShapeError(f"{k}: shape {np.shape(v)} != {own[k].shape}")
            self.params[k] = np.array(v, dtype=np.float64)

    def n_front_params(self) -> int:
        return sum(v.size for k, v in self.params.items() if not k.startswith("clf."))

    def config(self) -> dict:
        raise NotImplementedError


class OracleModel(_Model):
    """The classifier alone, trained on uncompressed signals."""

    kind = "oracle"

    def __init__(self, input_shape: Sequence[int], classifier: ClassifierSpec = ClassifierSpec(),
                 seed: int = 0):
        self.input_shape = check_extents(input_shape, "input_shape")
        self.feature_shape = self.input_shape
        self.classifier = Classifier(classifier, self.feature_shape)
        self.params = self.classifier.init_params(np.random.default_rng(seed))

    def _shapes(self):
        return []

    def features_graph(self, nodes, x):
        return x

    def config(self) -> dict:
        return {"kind": self.kind, "input_shape": list(self.input_shape),
                "classifier": self.classifier.spec.to_dict()}


class MclModel(_Model):
    """Separable sensing ``Z = Y x_0 Phi_0 ... x_{N-1} Phi_{N-1}`` followed by
    feature synthesis ``T = [ReLU](Z) x_0 Theta_0 ...`` and a classifier.

    With ``shared_weights`` the synthesis matrices are read as ``Phi_n^T``
    from the same storage, which forces ``feature_shape == input_shape``.
    """

    kind = "mcl"

    def __init__(self, input_shape: Sequence[int], measurement_shape: Sequence[int],
                 feature_shape: Sequence[int] | None = None, shared_weights: bool = False,
                 nonlinearity: bool = False, classifier: ClassifierSpec = ClassifierSpec(),
                 seed: int = 0):
        self.input_shape = check_extents(input_shape, "input_shape")
        self.measurement_shape = check_extents(measurement_shape, "measurement_shape")
        check_compression(self.input_shape, self.measurement_shape, strict=False)
        fshape = self.input_shape if feature_shape is None else check_extents(feature_shape, "feature_shape")
        if len(fshape) != len(self.input_shape):
            raise ShapeError(f"feature shape {fshape} must have {len(self.input_shape)} modes")
        if shared_weights and fshape != self.input_shape:
            raise ShapeError("shared weights require feature_shape == input_shape")
        self.feature_shape = fshape
        self.shared_weights = bool(shared_weights)
        self.nonlinearity = bool(nonlinearity)
        self.classifier = Classifier(classifier, self.feature_shape)
        rng = np.random.default_rng(seed)
        self.params = self._init_front(rng)
        self.params.update(self.classifier.init_params(rng))

    @property
    def n_modes(self) -> int:
        return len(self.input_shape)

    def _shapes(self):
        out = [(f"phi{n}", (m, i), i, m)
               for n, (i, m) in enumerate(zip(self.input_shape, self.measurement_shape))]
        if not self.shared_weights:
            out += [(f"theta{n}", (t, m), m, t)
                    for n, (t, m) in enumerate(zip(self.feature_shape, self.measurement_shape))]
        return out

    @property
    def sensing(self) -> list[np.ndarray]:
        return [self.params[f"phi{n}"] for n in range(self.n_modes)]

    @property
    def synthesis(self) -> list[np.ndarray]:
        if self.shared_weights:
            return [self.params[f"phi{n}"].T for n in range(self.n_modes)]
        return [self.params[f"theta{n}"] for n in range(self.n_modes)]

    def sensing_graph(self, nodes: dict[str, Node], x: Node) -> Node:
        z = x
        for n in range(self.n_modes):
            z = ag.mode_n_product(z, nodes[f"phi{n}"], n + 1)
        return z

    def synthesis_graph(self, nodes: dict[str, Node], z: Node) -> Node:
        t = ag.relu(z) if self.nonlinearity else z
        for n in range(self.n_modes):
            theta = ag.transpose(nodes[f"phi{n}"]) if self.shared_weights else nodes[f"theta{n}"]
            t = ag.mode_n_product(t, theta, n + 1)
        return t

    def features_graph(self, nodes, x):
        return self.synthesis_graph(nodes, self.sensing_graph(nodes, x))

    def cs_forward(self, y) -> np.ndarray:
        """Measurements ``Z`` for a batch (or a single signal)."""
        y = np.asarray(y, dtype=np.float64)
        single = y.shape == self.input_shape
        y = check_batch(y, self.input_shape, "Y")
        z = tcore.multi_mode_product(y, self.sensing, first_mode=1)
        return z[0] if single else z

    def fs_forward(self, z) -> np.ndarray:
        """Features ``T`` from measurements ``Z`` (batch or single)."""
        z = np.asarray(z, dtype=np.float64)
        single = z.shape == self.measurement_shape
        z = check_batch(z, self.measurement_shape, "Z")
        if self.nonlinearity:
            z = np.maximum(z, 0.0)
        t = tcore.multi_mode_product(z, self.synthesis, first_mode=1)
        return t[0] if single else t

    def config(self) -> dict:
        return {"kind": self.kind, "input_shape": list(self.input_shape),
                "measurement_shape": list(self.measurement_shape),
                "feature_shape": list(self.feature_shape),
                "shared_weights": self.shared_weights, "nonlinearity": self.nonlinearity,
                "classifier": self.classifier.spec.to_dict()}


class VectorModel(_Model):
    """Vector-based baseline: one ``m x D`` sensing matrix per trailing-mode
    slice (colour channel), with reprojection through the same matrix
    transposed. ``D`` is the number of elements per slice.
    """

    kind = "vector"

    def __init__(self, input_shape: Sequence[int], m: int, classifier: ClassifierSpec = ClassifierSpec(),
                 seed: int = 0):
        self.input_shape = check_extents(input_shape, "input_shape")
        if len(self.input_shape) < 2:
            raise ShapeError("vector baseline needs at least two modes (slices are the last mode)")
        self.channels = self.input_shape[-1]
        self.slice_size = int(np.prod(self.input_shape[:-1]))
        self.m = int(m)
        if not 1 <= self.m <= self.slice_size:
            raise ShapeError(f"m={self.m} must lie in [1, {self.slice_size}]")
        self.feature_shape = self.input_shape
        self.classifier = Classifier(classifier, self.feature_shape)
        rng = np.random.default_rng(seed)
        self.params = self._init_front(rng)
        self.params.update(self.classifier.init_params(rng))

    @property
    def measurement_count(self) -> int:
        return self.m * self.channels

    def _shapes(self):
        return [("phi", (self.channels, self.m, self.slice_size), self.slice_size, self.m)]

    # Channels go to the front so that both stages are stacked matrix products.
    def sensing_graph(self, nodes, x):
        flat = ag.reshape(x, (x.shape[0], self.slice_size, self.channels))
        z = ag.matmul(ag.permute(flat, (2, 0, 1)), ag.permute(nodes["phi"], (0, 2, 1)))
        return ag.permute(z, (1, 2, 0))

    def synthesis_graph(self, nodes, z):
        back = ag.matmul(ag.permute(z, (2, 0, 1)), nodes["phi"])
        return ag.reshape(ag.permute(back, (1, 2, 0)), (z.shape[0], *self.input_shape))

    def features_graph(self, nodes, x):
        return self.synthesis_graph(nodes, self.sensing_graph(nodes, x))

    def cs_forward(self, y) -> np.ndarray:
        """Per-channel measurements, ``B x m x C`` (``m x C`` for one signal)."""
        y = np.asarray(y, dtype=np.float64)
        single = y.shape == self.input_shape
        y = check_batch(y, self.input_shape, "Y")
        flat = y.reshape(y.shape[0], self.slice_size, self.channels).transpose(2, 0, 1)
        z = np.matmul(flat, self.params["phi"].transpose(0, 2, 1)).transpose(1, 2, 0)
        return z[0] if single else z

    def fs_forward(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        single = z.shape == (self.m, self.channels)
        z = check_batch(z, (self.m, self.channels), "Z")
        t = np.matmul(z.transpose(2, 0, 1), self.params["phi"]).transpose(1, 2, 0)
        t = t.reshape(z.shape[0], *self.input_shape)
        return t[0] if single else t

    def config(self) -> dict:
        return {"kind": self.kind, "input_shape": list(self.input_shape), "m": self.m,
                "classifier": self.classifier.spec.to_dict()}


def model_from_config(cfg: dict):
    """Rebuild an (untrained) model from ``model.config()``."""
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    cls_cfg = cfg.pop("classifier")
    spec = ClassifierSpec(**cls_cfg)
    if kind == "oracle":
        return OracleModel(cfg["input_shape"], spec)
    if kind == "mcl":
        return MclModel(cfg["input_shape"], cfg["measurement_shape"], cfg.get("feature_shape"),
                        cfg.get("shared_weights", False), cfg.get("nonlinearity", False), spec)
    if kind == "vector":
        return VectorModel(cfg["input_shape"], cfg["m"], spec)
    raise ValueError(f"unknown model kind {kind!r}")


# -- initialization ----------------------------------------------------------

def init_random(model, seed: int):
    """Glorot-uniform weights for every matrix, zero biases."""
    rng = np.random.default_rng(seed)
    model.params.update(model._init_front(rng))
    model.params.update(model.classifier.init_params(rng))
    return model


def init_hosvd(model: MclModel, samples, seed: int = 0):
    """Sensing from the per-mode HOSVD of the training batch; synthesis as
    the transposed sensing bases where the feature extent equals the signal
    extent, Glorot-uniform otherwise. Classifier weights are left untouched.
    """
    if not isinstance(model, MclModel):
        raise TypeError("HOSVD initialization applies to MclModel")
    samples = check_batch(samples, model.input_shape, "samples")
    factors = tcore.hosvd_factors(samples, model.measurement_shape)
    rng = np.random.default_rng(seed)
    for n, phi in enumerate(factors):
        model.params[f"phi{n}"] = np.ascontiguousarray(phi)
        if model.shared_weights:
            continue
        t, m = model.feature_shape[n], model.measurement_shape[n]
        if t == model.input_shape[n]:
            model.params[f"theta{n}"] = np.ascontiguousarray(phi.T)
        else:
            model.params[f"theta{n}"] = glorot_uniform(rng, (t, m), m, t)
    return model


def init_pca(model: VectorModel, samples):
    """Per-channel PCA bases (computed on centred data) as sensing matrices."""
    if not isinstance(model, VectorModel):
        raise TypeError("PCA initialization applies to VectorModel")
    samples = check_batch(samples, model.input_shape, "samples")
    flat = samples.reshape(samples.shape[0], model.slice_size, model.channels)
    phi = np.empty_like(model.params["phi"])
    for c in range(model.channels):
        phi[c], _ = tcore.pca_basis(flat[:, :, c], model.m)
    model.params["phi"] = phi
    return model
