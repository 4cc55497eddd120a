"""Dense feed-forward network with hand-written gradients.

Weights are stored ``fan_in x fan_out`` so a layer computes ``z = a @ W + b``.
Hidden layers are ReLU, the last layer emits raw logits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError

RELU = "relu"
IDENTITY = "identity"


@dataclass
class DenseLayer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.size == 0:
            raise InvalidArgumentError("weights must be a non-empty 2-D matrix")
        if self.biases.shape != (self.weights.shape[1],):
            raise InvalidArgumentError(
                f"biases shape {self.biases.shape} != ({self.weights.shape[1]},)"
            )
        if self.activation not in (RELU, IDENTITY):
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> DenseLayer:
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class DenseNet:
    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise InvalidArgumentError("a network needs at least one layer")
        for i, (lo, hi) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if lo.fan_out != hi.fan_in:
                raise InvalidArgumentError(
                    f"shape chain broken between layer {i} ({lo.fan_out}) "
                    f"and layer {i + 1} ({hi.fan_in})"
                )
        for i, layer in enumerate(self.layers):
            want = IDENTITY if i == len(self.layers) - 1 else RELU
            if layer.activation != want:
                raise InvalidArgumentError(f"layer {i} must use {want}")
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
                raise InvalidArgumentError(f"layer {i} holds non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def k(self) -> int:
        return self.layers[-1].fan_out

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.fan_out for layer in self.layers]

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.fan_out for layer in self.layers[:-1]]

    def parameter_count(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def copy(self) -> DenseNet:
        return DenseNet([layer.copy() for layer in self.layers])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0015
    epochs: int = 3
    batch_size: int = 32
    seed: int = 7

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be non-negative")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must fit in 64 unsigned bits")


@dataclass
class ForwardTrace:
    """Inputs plus per-layer pre-activations ``z`` and outputs ``a``.

    Arrays are 1-D for a single sample and ``(n, width)`` for a batch.
    """

    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def logits(self) -> np.ndarray:
        return self.post[-1]

    def layer_input(self, i: int) -> np.ndarray:
        return self.inputs if i == 0 else self.post[i - 1]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # dL/da for the input and every hidden layer output, per sample
    activations: list[np.ndarray]
    loss: float


def init_net(dims, seed: int) -> DenseNet:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise InvalidArgumentError(f"invalid layer widths {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        act = IDENTITY if i == len(dims) - 2 else RELU
        layers.append(
            DenseLayer(rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out), act)
        )
    return DenseNet(layers)


def forward(net: DenseNet, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise InvalidArgumentError(f"input shape {x.shape} does not match input_dim {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("input holds non-finite values")
    trace = ForwardTrace(inputs=x)
    a = x
    for i, layer in enumerate(net.layers):
        with np.errstate(over="ignore", invalid="ignore"):
            z = a @ layer.weights + layer.biases
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite pre-activation in layer {i}")
        a = np.maximum(z, 0.0) if layer.activation == RELU else z
        trace.pre.append(z)
        trace.post.append(a)
    return trace


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InvalidArgumentError(f"label out of range [0, {k})")
    return labels.astype(np.intp)


def backward_from_trace(net: DenseNet, trace: ForwardTrace, labels) -> Gradients:
    """Softmax cross-entropy gradients.

    Weight/bias gradients are for the mean loss over the batch; activation
    gradients are per sample, i.e. for that sample's own loss.
    """
    single = trace.inputs.ndim == 1
    labels = _check_labels(np.atleast_1d(labels), net.k)
    logits = np.atleast_2d(trace.logits)
    n = logits.shape[0]
    if labels.shape != (n,):
        raise InvalidArgumentError("one label per sample required")
    probs = _softmax(logits)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, labels], np.finfo(float).tiny)).mean())
    g = probs
    g[rows, labels] -= 1.0  # dL_s/dz for each sample s

    w_grads = [None] * len(net.layers)
    b_grads = [None] * len(net.layers)
    a_grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        a_in = np.atleast_2d(trace.layer_input(i))
        w_grads[i] = a_in.T @ g / n
        b_grads[i] = g.sum(axis=0) / n
        ga = g @ net.layers[i].weights.T
        a_grads[i] = ga
        if i > 0:
            g = ga * (np.atleast_2d(trace.pre[i - 1]) > 0)
    if single:
        a_grads = [ga[0] for ga in a_grads]
    return Gradients(w_grads, b_grads, a_grads, loss)


def backward_grads(net: DenseNet, x, label) -> Gradients:
    return backward_from_trace(net, forward(net, x), label)


def loss(net: DenseNet, x, labels) -> float:
    """Mean softmax cross-entropy."""
    logits = np.atleast_2d(forward(net, x).logits)
    labels = _check_labels(np.atleast_1d(labels), net.k)
    probs = _softmax(logits)
    return float(-np.log(probs[np.arange(len(labels)), labels]).mean())


def sgd_train(net: DenseNet, data, cfg: TrainConfig) -> tuple[DenseNet, list[float]]:
    """Mini-batch SGD on softmax cross-entropy; returns a new net and per-epoch mean loss."""
    if len(data.labels) == 0:
        raise InvalidArgumentError("empty training set")
    if data.features.shape[1] != net.input_dim:
        raise InvalidArgumentError("feature dimension does not match the network")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(data.labels)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                trace = forward(net, data.features[idx])
            except NumericError as exc:
                raise NumericError("training diverged", epoch) from exc
            grads = backward_from_trace(net, trace, data.labels[idx])
            total += grads.loss * len(idx)
            for layer, gw, gb in zip(net.layers, grads.weights, grads.biases):
                layer.weights -= cfg.learning_rate * gw
                layer.biases -= cfg.learning_rate * gb
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise NumericError("training loss is not finite", epoch)
        history.append(epoch_loss)
    return net, history


def predict(net: DenseNet, features, chunk: int = 2048) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    out = [np.argmax(forward(net, features[s:s + chunk]).logits, axis=1)
           for s in range(0, len(features), chunk)]
    return np.concatenate(out)


def evaluate(net: DenseNet, data) -> float:
    if len(data.labels) == 0:
        raise InvalidArgumentError("empty evaluation set")
    hits = int(np.count_nonzero(predict(net, data.features) == data.labels))
    return hits / len(data.labels)
