"""Layer-wise relevance propagation (epsilon rule) and neuron score aggregation.

For a layer computing ``z_j = sum_i a_i w_ij + b_j`` the relevance of output
``j`` is split over its inputs as

    R_{i<-j} = z_ij / (z_j + eps * sign(z_j)) * R_j,     sign(0) := +1

where ``z_ij`` is input ``i``'s contribution to ``z_j``.  Two bias rules:

``absorb`` (default)
    ``z_ij = a_i w_ij + b_j |a_i| / sum_k |a_k|``, so the contributions sum
    to ``z_j`` and relevance is conserved up to the epsilon term.  Inputs
    with ``a_i = 0`` still receive nothing.
``drop``
    ``z_ij = a_i w_ij``; the bias share ``b_j R_j / z_j`` is lost.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .nn import DenseNet, ForwardTrace, forward

BIAS_RULES = ("absorb", "drop")
CRITERIA = ("lrp", "magnitude", "taylor")
DEFAULT_EPSILON = 1e-9


@dataclass
class RelevanceRecord:
    # one vector per activation layer: input features, hidden layers, logits
    relevances: list[np.ndarray]
    start_relevance: float
    sample_id: int | None = None

    @property
    def hidden(self) -> list[np.ndarray]:
        return self.relevances[1:-1]


@dataclass
class ImportanceScores:
    criterion: str
    scores: list[np.ndarray]
    n_samples: int = 0

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise InvalidArgumentError(f"unknown criterion {self.criterion!r}")
        self.scores = [np.asarray(s, dtype=np.float64) for s in self.scores]
        for i, s in enumerate(self.scores):
            if s.ndim != 1 or not np.all(np.isfinite(s)):
                raise InvalidArgumentError(f"scores of layer {i} must be a finite vector")

    def scaled(self, c: float) -> ImportanceScores:
        return ImportanceScores(self.criterion, [c * s for s in self.scores], self.n_samples)


def _check(eps, bias_rule):
    if not eps > 0:
        raise InvalidArgumentError("epsilon must be positive")
    if bias_rule not in BIAS_RULES:
        raise InvalidArgumentError(f"unknown bias rule {bias_rule!r}")


def _stabilize(z, eps):
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def _bias_share(a_in):
    mag = np.abs(a_in)
    total = mag.sum(axis=-1, keepdims=True)
    return np.divide(mag, total, out=np.zeros_like(mag), where=total > 0)


def _redistribute(a_in, weights, biases, z, r_out, eps, bias_rule):
    s = r_out / _stabilize(z, eps)
    r_in = a_in * (s @ weights.T)
    if bias_rule == "absorb":
        r_in = r_in + _bias_share(a_in) * (s @ biases)[..., None]
    return r_in


def _start(trace, targets, k):
    logits = np.atleast_2d(trace.logits)
    targets = np.atleast_1d(np.asarray(targets))
    if targets.shape != (len(logits),):
        raise InvalidArgumentError("one target per sample required")
    if targets.min() < 0 or targets.max() >= k:
        raise InvalidArgumentError(f"target out of range [0, {k})")
    targets = targets.astype(np.intp)
    rows = np.arange(len(logits))
    r = np.zeros_like(logits)
    r[rows, targets] = logits[rows, targets]
    return r


def lrp_batch(net: DenseNet, trace: ForwardTrace, targets, epsilon=DEFAULT_EPSILON,
              bias_rule="absorb", start=None) -> list[np.ndarray]:
    """Relevances for a batch trace: list over [input, hidden..., output] of (n, width).

    ``start`` overrides the output relevance (default: target logit, zero elsewhere).
    """
    _check(epsilon, bias_rule)
    if start is None:
        r = _start(trace, targets, net.k)
    else:
        r = np.atleast_2d(np.asarray(start, dtype=np.float64))
        if r.shape != np.atleast_2d(trace.logits).shape:
            raise InvalidArgumentError("start relevance must match the logits' shape")
    out = [r]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        r = _redistribute(np.atleast_2d(trace.layer_input(i)), layer.weights, layer.biases,
                          np.atleast_2d(trace.pre[i]), r, epsilon, bias_rule)
        out.append(r)
    return out[::-1]


def lrp_attribute(net: DenseNet, trace: ForwardTrace, target: int, epsilon=DEFAULT_EPSILON,
                  bias_rule="absorb", sample_id=None) -> RelevanceRecord:
    if trace.inputs.ndim != 1:
        raise InvalidArgumentError("lrp_attribute takes a single-sample trace; use lrp_batch")
    rel = [r[0] for r in lrp_batch(net, trace, [target], epsilon, bias_rule)]
    return RelevanceRecord(rel, float(rel[-1][target]), sample_id)


def conservation_check(record: RelevanceRecord) -> float:
    """Largest relative gap between a layer's total relevance and the injected one."""
    denom = max(abs(record.start_relevance), 1e-12)
    return max(abs(float(np.sum(r)) - record.start_relevance) / denom for r in record.relevances)


def weight_relevance(net: DenseNet, trace: ForwardTrace, target: int, epsilon=DEFAULT_EPSILON,
                     bias_rule="absorb") -> list[np.ndarray]:
    """Per-connection relevance ``z_ij R_j / (z_j + eps sign z_j)`` for each layer."""
    if trace.inputs.ndim != 1:
        raise InvalidArgumentError("weight_relevance takes a single-sample trace")
    rel = [r[0] for r in lrp_batch(net, trace, [target], epsilon, bias_rule)]
    mats = []
    for i, layer in enumerate(net.layers):
        a_in = trace.layer_input(i)
        contrib = a_in[:, None] * layer.weights
        if bias_rule == "absorb":
            contrib = contrib + np.outer(_bias_share(a_in), layer.biases)
        mats.append(contrib * (rel[i + 1] / _stabilize(trace.pre[i], epsilon))[None, :])
    return mats


def aggregate_neuron_scores(net: DenseNet, scoring_set, epsilon=DEFAULT_EPSILON,
                            bias_rule="absorb", chunk: int = 500) -> ImportanceScores:
    """Mean signed hidden-neuron relevance, each sample seeded at its true-class logit."""
    n = len(scoring_set.labels) if scoring_set is not None else 0
    if n == 0:
        raise InvalidArgumentError("scoring set is empty")
    totals = [np.zeros(w) for w in net.hidden_widths]
    # fixed chunk order keeps the reduction bit-reproducible
    for s in range(0, n, chunk):
        x = scoring_set.features[s:s + chunk]
        rel = lrp_batch(net, forward(net, x), scoring_set.labels[s:s + chunk], epsilon, bias_rule)
        for t, r in zip(totals, rel[1:-1]):
            t += r.sum(axis=0)
    return ImportanceScores("lrp", [t / n for t in totals], n)


def write_scores_csv(scores: ImportanceScores, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "neuron_index", "score", "criterion"])
        for layer, vec in enumerate(scores.scores):
            for j, v in enumerate(vec):
                writer.writerow([layer, j, repr(float(v)), scores.criterion])


def read_scores_csv(path) -> ImportanceScores:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgumentError(f"{path}: no scores")
    criteria = {r["criterion"] for r in rows}
    if len(criteria) != 1:
        raise InvalidArgumentError(f"{path}: mixed criteria {sorted(criteria)}")
    n_layers = max(int(r["layer"]) for r in rows) + 1
    per_layer = [dict() for _ in range(n_layers)]
    for r in rows:
        per_layer[int(r["layer"])][int(r["neuron_index"])] = float(r["score"])
    vecs = []
    for i, d in enumerate(per_layer):
        if sorted(d) != list(range(len(d))) or not d:
            raise InvalidArgumentError(f"{path}: layer {i} neuron indices are not contiguous")
        vecs.append(np.array([d[j] for j in range(len(d))]))
    return ImportanceScores(criteria.pop(), vecs)
