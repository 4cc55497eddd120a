"""Score-driven pruning, median-split mixed precision and size accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateLayerError, InvalidArgumentError
from .nn import IDENTITY, RELU, DenseLayer, DenseNet, forward
from .relevance import ImportanceScores

MIN_BITS, MAX_BITS = 2, 16
LOW, HIGH = False, True

# magic(4) + version u16 + input_dim u32 + k u32 + layer_count u32
FIXED_HEADER_BYTES = 18
PER_LAYER_HEADER_BYTES = 4  # width u32
FLOAT_BYTES = 4


def _check_bits(b):
    if not MIN_BITS <= int(b) <= MAX_BITS:
        raise InvalidArgumentError(f"bit-width {b} outside [{MIN_BITS}, {MAX_BITS}]")


def _check_pair(pair):
    low, high = (int(v) for v in pair)
    _check_bits(low)
    _check_bits(high)
    if low > high:
        raise InvalidArgumentError(f"low bits {low} exceed high bits {high}")
    return low, high


@dataclass
class CompressionPlan:
    masks: list[np.ndarray]          # keep-mask over the original hidden neurons
    taus: list[float]                # median of surviving scores per layer
    bit_pairs: list[tuple[int, int]]
    assignments: list[np.ndarray]    # over survivors, True = high precision

    def survivors(self) -> list[int]:
        return [int(m.sum()) for m in self.masks]

    def neuron_bits(self) -> list[np.ndarray]:
        return [np.where(a, hi, lo).astype(np.uint8)
                for a, (lo, hi) in zip(self.assignments, self.bit_pairs)]


def prune_mask(scores: ImportanceScores) -> list[np.ndarray]:
    """Keep exactly the neurons whose score is strictly positive."""
    masks = [s > 0 for s in scores.scores]
    for i, m in enumerate(masks):
        if not m.any():
            raise DegenerateLayerError(i)
    return masks


def top_k_masks(scores: ImportanceScores, counts) -> list[np.ndarray]:
    """Keep the ``counts[i]`` highest scores per layer; ties go to the lower index."""
    masks = []
    for i, (s, c) in enumerate(zip(scores.scores, counts)):
        c = int(c)
        if c <= 0:
            raise DegenerateLayerError(i)
        if c > len(s):
            raise InvalidArgumentError(f"layer {i}: cannot keep {c} of {len(s)} neurons")
        m = np.zeros(len(s), dtype=bool)
        m[np.argsort(-s, kind="stable")[:c]] = True
        masks.append(m)
    return masks


def apply_prune(net: DenseNet, masks) -> DenseNet:
    """Drop each masked-out neuron's incoming column, bias and outgoing row."""
    if len(masks) != len(net.layers) - 1:
        raise InvalidArgumentError("one mask per hidden layer required")
    layers = [layer.copy() for layer in net.layers]
    for i, m in enumerate(masks):
        m = np.asarray(m, dtype=bool)
        if m.shape != (layers[i].fan_out,):
            raise InvalidArgumentError(f"mask {i} has shape {m.shape}")
        if not m.any():
            raise DegenerateLayerError(i)
        layers[i] = DenseLayer(layers[i].weights[:, m], layers[i].biases[m], layers[i].activation)
        nxt = layers[i + 1]
        layers[i + 1] = DenseLayer(nxt.weights[m, :], nxt.biases, nxt.activation)
    return DenseNet(layers)


def assign_precision(surviving_scores, bit_pairs, masks=None) -> CompressionPlan:
    """Median split per layer: strictly above the median gets the high bit-width."""
    surviving_scores = [np.asarray(s, dtype=np.float64) for s in surviving_scores]
    if len(bit_pairs) != len(surviving_scores):
        raise InvalidArgumentError("one bit pair per hidden layer required")
    pairs = [_check_pair(p) for p in bit_pairs]
    taus, assignments = [], []
    for i, s in enumerate(surviving_scores):
        if s.size == 0:
            raise DegenerateLayerError(i)
        tau = float(np.median(s))
        taus.append(tau)
        assignments.append(s > tau)
    if masks is None:
        masks = [np.ones(len(s), dtype=bool) for s in surviving_scores]
    return CompressionPlan([np.asarray(m, dtype=bool) for m in masks], taus, pairs, assignments)


def make_plan(scores: ImportanceScores, bit_pairs, keep_counts=None) -> CompressionPlan:
    """Prune (score > 0, or top-``keep_counts``) then median-split the survivors."""
    masks = prune_mask(scores) if keep_counts is None else top_k_masks(scores, keep_counts)
    return assign_precision([s[m] for s, m in zip(scores.scores, masks)], bit_pairs, masks)


def quantize_group(weights, bits: int):
    """Symmetric linear quantization of one weight group.

    ``scale = max|w| / (2**(bits-1) - 1)`` stored as float32 (1 for an all-zero
    group), ``code = round_half_away(w / scale)`` clamped to the symmetric range.
    """
    _check_bits(bits)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite")
    codes, scales = kernels.quantize_columns(w[:, None], np.array([bits]))
    if not np.isfinite(scales[0]):
        raise InvalidArgumentError("weights too large for a float32 scale")
    return codes[:, 0], float(scales[0])


@dataclass
class QuantizedLayer:
    codes: np.ndarray    # int32, fan_in x width; column j is neuron j's group
    scales: np.ndarray   # float32, one per neuron
    bits: np.ndarray     # uint8, one per neuron
    biases: np.ndarray   # float32

    @property
    def fan_in(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    def dequantized(self) -> np.ndarray:
        return self.codes.astype(np.float64) * self.scales.astype(np.float64)[None, :]


@dataclass
class QuantizedModel:
    layers: list[QuantizedLayer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def k(self) -> int:
        return self.layers[-1].width

    def validate(self) -> None:
        if not self.layers:
            raise InvalidArgumentError("quantized model has no layers")
        prev = self.layers[0].fan_in
        for i, q in enumerate(self.layers):
            if q.fan_in != prev or q.width == 0:
                raise InvalidArgumentError(f"layer {i}: broken shape chain")
            for name, arr in (("scales", q.scales), ("bits", q.bits), ("biases", q.biases)):
                if arr.shape != (q.width,):
                    raise InvalidArgumentError(f"layer {i}: {name} shape {arr.shape}")
            if q.bits.min() < MIN_BITS or q.bits.max() > MAX_BITS:
                raise InvalidArgumentError(f"layer {i}: bit-width out of range")
            if not (np.all(np.isfinite(q.scales)) and np.all(q.scales > 0)):
                raise InvalidArgumentError(f"layer {i}: scales must be finite and positive")
            if not np.all(np.isfinite(q.biases)):
                raise InvalidArgumentError(f"layer {i}: non-finite bias")
            qmax = (1 << q.bits.astype(np.int64)) - 1 >> 1
            if np.any(np.abs(q.codes.astype(np.int64)) > qmax[None, :]):
                raise InvalidArgumentError(f"layer {i}: code outside the symmetric range")
            prev = q.width


def quantize_model(net: DenseNet, plan: CompressionPlan) -> QuantizedModel:
    """Quantize a pruned net; the logits layer uses the last hidden layer's high bit-width."""
    hidden = net.layers[:-1]
    if len(plan.assignments) != len(hidden):
        raise InvalidArgumentError("plan and net disagree on the number of hidden layers")
    per_layer_bits = plan.neuron_bits()
    for i, (layer, b) in enumerate(zip(hidden, per_layer_bits)):
        if len(b) != layer.fan_out:
            raise InvalidArgumentError(
                f"plan has {len(b)} survivors for layer {i}, net has {layer.fan_out}"
            )
    per_layer_bits.append(np.full(net.k, plan.bit_pairs[-1][1], dtype=np.uint8))
    layers = []
    for layer, b in zip(net.layers, per_layer_bits):
        codes, scales = kernels.quantize_columns(layer.weights, b)
        biases = layer.biases.astype(np.float32)
        if not (np.all(np.isfinite(scales)) and np.all(np.isfinite(biases))):
            raise InvalidArgumentError("parameters overflow float32")
        layers.append(QuantizedLayer(codes, scales, b.astype(np.uint8), biases))
    return QuantizedModel(layers)


def dequantize(qmodel: QuantizedModel) -> DenseNet:
    n = len(qmodel.layers)
    return DenseNet([
        DenseLayer(q.dequantized(), q.biases.astype(np.float64), IDENTITY if i == n - 1 else RELU)
        for i, q in enumerate(qmodel.layers)
    ])


def quantized_forward(qmodel: QuantizedModel, x) -> np.ndarray:
    """Logits of the dequantize-then-multiply reference network."""
    return forward(dequantize(qmodel), x).logits


@dataclass(frozen=True)
class SizeBreakdown:
    weights: int
    scales: int = 0
    biases: int = 0
    bitwidths: int = 0
    header: int = 0

    @property
    def total(self) -> int:
        return self.weights + self.scales + self.biases + self.bitwidths + self.header

    @property
    def megabytes(self) -> float:
        return self.total / 1e6


def model_size_bytes(model) -> SizeBreakdown:
    """Exact storage cost.

    Full-precision nets cost 4 bytes per weight and bias.  Quantized models
    cost exactly their serialized length: packed codes (each group rounded up
    to whole bytes), a float32 scale, float32 bias and one bit-width byte per
    neuron, plus ``18 + 4 * layers`` bytes of header.
    """
    if isinstance(model, DenseNet):
        return SizeBreakdown(
            weights=FLOAT_BYTES * sum(l.weights.size for l in model.layers),
            biases=FLOAT_BYTES * sum(l.biases.size for l in model.layers),
        )
    if isinstance(model, QuantizedModel):
        weights = sum(int(kernels.packed_group_bytes(q.fan_in, q.bits).sum()) for q in model.layers)
        neurons = sum(q.width for q in model.layers)
        return SizeBreakdown(
            weights=weights,
            scales=FLOAT_BYTES * neurons,
            biases=FLOAT_BYTES * neurons,
            bitwidths=neurons,
            header=FIXED_HEADER_BYTES + PER_LAYER_HEADER_BYTES * len(model.layers),
        )
    raise InvalidArgumentError(f"cannot size a {type(model).__name__}")
