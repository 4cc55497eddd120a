"""Baseline importance criteria: incoming-weight magnitude and first-order Taylor."""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .nn import DenseNet, backward_from_trace, forward
from .relevance import ImportanceScores


def magnitude_scores(net: DenseNet) -> ImportanceScores:
    """L1 norm of each hidden neuron's incoming weight column. Data-free."""
    return ImportanceScores(
        "magnitude", [np.abs(layer.weights).sum(axis=0) for layer in net.layers[:-1]]
    )


def taylor_scores(net: DenseNet, scoring_set, chunk: int = 500) -> ImportanceScores:
    """|mean_s a_i(s) * dL_s/da_i(s)| per hidden neuron, L = cross-entropy at the true label."""
    n = len(scoring_set.labels) if scoring_set is not None else 0
    if n == 0:
        raise InvalidArgumentError("scoring set is empty")
    totals = [np.zeros(w) for w in net.hidden_widths]
    for s in range(0, n, chunk):
        trace = forward(net, scoring_set.features[s:s + chunk])
        grads = backward_from_trace(net, trace, scoring_set.labels[s:s + chunk])
        # activations[i + 1] is dL/da for the output of hidden layer i
        for i, t in enumerate(totals):
            t += (trace.post[i] * grads.activations[i + 1]).sum(axis=0)
    return ImportanceScores("taylor", [np.abs(t / n) for t in totals], n)
