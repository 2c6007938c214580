"""A compact dense network (relu or tanh hidden layers, softmax output) with
plain mini-batch SGD.

The network is deliberately small and self-contained: deterministic
initialization, hand-written gradients, and no optimizer state beyond the
weights themselves, so locally trained models are reproducible bit for bit
from (weights, data, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ShapeMismatchError
from .model import GradientUpdate, LayerShape, ModelWeights

__all__ = [
    "ACTIVATIONS",
    "NetworkArchitecture",
    "TrainConfig",
    "EvalResult",
    "init_model",
    "forward",
    "predict",
    "loss_and_grad",
    "train_local",
    "evaluate",
]

ACTIVATIONS = ("relu", "tanh")

_EVAL_CHUNK = 8192


@dataclass(frozen=True)
class NetworkArchitecture:
    """Dense layer sizes from input to output, e.g. ``(20, 16, 4)``."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("architecture needs input, at least one hidden, and output sizes")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Local SGD hyperparameters. ``learning_rate`` 0 is allowed and leaves
    the model unchanged; experiment configs require a positive rate."""

    learning_rate: float
    batch_size: int
    epochs: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class EvalResult:
    """Overall accuracy plus accuracy per class actually present in the data."""

    accuracy: float
    per_class: dict[int, float]


def init_model(arch: NetworkArchitecture, seed: int | None = None) -> ModelWeights:
    """Deterministic initialization: each weight matrix is drawn uniformly
    from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, biases start at zero. Every
    matrix and every bias registers as its own layer."""
    rng = np.random.default_rng(arch.seed if seed is None else seed)
    layers: list[tuple[LayerShape, np.ndarray]] = []
    sizes = arch.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = 1.0 / math.sqrt(fan_in)
        weight = rng.uniform(-scale, scale, (fan_in, fan_out))
        layers.append((LayerShape((fan_in, fan_out)), weight.ravel()))
        layers.append((LayerShape((fan_out,)), np.zeros(fan_out)))
    return ModelWeights(layers)


def _dense_pairs(model: ModelWeights) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reshape the flat layers back into (weight matrix, bias) pairs."""
    if model.num_layers == 0 or model.num_layers % 2 != 0:
        raise ShapeMismatchError(
            f"expected alternating matrix/bias layers, got {model.num_layers} layers"
        )
    pairs = []
    for k in range(0, model.num_layers, 2):
        (w_shape, w_vec), (b_shape, b_vec) = model.layers[k], model.layers[k + 1]
        if len(w_shape.dims) != 2 or len(b_shape.dims) != 1 or w_shape.dims[1] != b_shape.dims[0]:
            raise ShapeMismatchError(
                f"layers {k},{k + 1}: expected a matrix followed by its bias, "
                f"got dims {w_shape.dims} and {b_shape.dims}"
            )
        pairs.append((w_vec.reshape(w_shape.dims), b_vec))
    return pairs


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")


def _activate_grad(z: np.ndarray, activated: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - activated * activated


def _forward_probs(pairs, features: np.ndarray, activation: str) -> np.ndarray:
    hidden = features
    for weight, bias in pairs[:-1]:
        hidden = _activate(hidden @ weight + bias, activation)
    weight, bias = pairs[-1]
    logits = hidden @ weight + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(model: ModelWeights, features, activation: str = "relu") -> np.ndarray:
    """Class probabilities for a single feature vector.

    Softmax is computed with max-subtraction, so finite inputs always give a
    finite probability vector summing to 1.
    """
    x = np.asarray(features, dtype=np.float64).reshape(-1)
    pairs = _dense_pairs(model)
    expected = pairs[0][0].shape[0]
    if x.size != expected:
        raise ShapeMismatchError(f"feature vector length {x.size}, model expects {expected}")
    return _forward_probs(pairs, x[np.newaxis, :], activation)[0]


def predict(model: ModelWeights, features, activation: str = "relu") -> np.ndarray:
    """Argmax class indices for a batch of feature rows; exact probability
    ties resolve to the lower class index."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D feature batch, got shape {X.shape}")
    pairs = _dense_pairs(model)
    if X.shape[1] != pairs[0][0].shape[0]:
        raise ShapeMismatchError(
            f"feature width {X.shape[1]}, model expects {pairs[0][0].shape[0]}"
        )
    out = np.empty(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], _EVAL_CHUNK):
        chunk = X[start : start + _EVAL_CHUNK]
        out[start : start + chunk.shape[0]] = np.argmax(
            _forward_probs(pairs, chunk, activation), axis=1
        )
    return out


def _batch_grads(weights, biases, X, y, activation):
    """Mean cross-entropy over the batch and its gradients, in layer order."""
    batch = X.shape[0]
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [X]
    hidden = X
    for weight, bias in zip(weights[:-1], biases[:-1]):
        z = hidden @ weight + bias
        hidden = _activate(z, activation)
        pre.append(z)
        post.append(hidden)
    logits = hidden @ weights[-1] + biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -float(log_probs[np.arange(batch), y].mean())
    grad_logits = np.exp(log_probs)
    grad_logits[np.arange(batch), y] -= 1.0
    grad_logits /= batch
    weight_grads = [np.empty(0)] * len(weights)
    bias_grads = [np.empty(0)] * len(biases)
    upstream = grad_logits
    for k in range(len(weights) - 1, -1, -1):
        weight_grads[k] = post[k].T @ upstream
        bias_grads[k] = upstream.sum(axis=0)
        if k > 0:
            upstream = (upstream @ weights[k].T) * _activate_grad(
                pre[k - 1], post[k], activation
            )
    return loss, weight_grads, bias_grads


def loss_and_grad(
    model: ModelWeights, features, labels, activation: str = "relu"
) -> tuple[float, GradientUpdate]:
    """Mean softmax cross-entropy over a batch and its gradient, packaged in
    the model's layer order (matrix, bias, matrix, bias, ...)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    pairs = _dense_pairs(model)
    loss, weight_grads, bias_grads = _batch_grads(
        [w for w, _ in pairs], [b for _, b in pairs], X, y, activation
    )
    flat: list[np.ndarray] = []
    for wg, bg in zip(weight_grads, bias_grads):
        flat.append(wg.ravel())
        flat.append(bg)
    return loss, GradientUpdate(flat)


def train_local(
    model: ModelWeights,
    data: LabeledDataset,
    cfg: TrainConfig,
    activation: str = "relu",
) -> ModelWeights:
    """``cfg.epochs`` passes of mini-batch SGD starting from ``model``.

    Every epoch reshuffles the sample order from a stream derived from
    ``cfg.seed``, so identical inputs always produce identical outputs. The
    batch size is clamped to the local dataset size and the final short
    batch of each epoch is used as-is.
    """
    if data.n < 1:
        raise ValueError("training requires a nonempty dataset")
    pairs = _dense_pairs(model)
    if data.d != pairs[0][0].shape[0]:
        raise ShapeMismatchError(
            f"dataset width {data.d}, model expects {pairs[0][0].shape[0]}"
        )
    rng = np.random.default_rng(cfg.seed)
    weights = [np.array(w, copy=True) for w, _ in pairs]
    biases = [np.array(b, copy=True) for _, b in pairs]
    batch = min(cfg.batch_size, data.n)
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, batch):
            take = order[start : start + batch]
            _, weight_grads, bias_grads = _batch_grads(
                weights, biases, data.features[take], data.labels[take], activation
            )
            for k in range(len(weights)):
                weights[k] -= lr * weight_grads[k]
                biases[k] -= lr * bias_grads[k]
    layers: list[tuple[LayerShape, np.ndarray]] = []
    for k, (shape, _) in enumerate(model.layers):
        source = weights[k // 2] if k % 2 == 0 else biases[k // 2]
        layers.append((shape, source.ravel()))
    return ModelWeights(layers)


def evaluate(model: ModelWeights, data: LabeledDataset, activation: str = "relu") -> EvalResult:
    """Argmax accuracy overall and per class present in ``data``.

    Classes absent from the data simply do not appear in ``per_class``; the
    count-weighted average of the per-class accuracies equals ``accuracy``.
    """
    preds = predict(model, data.features, activation)
    correct = preds == data.labels
    per_class = {
        int(cls): float(correct[data.labels == cls].mean())
        for cls in np.unique(data.labels)
    }
    return EvalResult(float(correct.mean()), per_class)
