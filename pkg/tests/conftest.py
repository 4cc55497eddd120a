import numpy as np
import pytest

from xaicompress.nn import DenseLayer, DenseNet, init_net
from xaicompress.pipeline import PipelineConfig, prepare

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_net(dims, seed, bias_scale=0.0):
    """Glorot net with optional random biases."""
    net = init_net(dims, seed)
    if bias_scale:
        rng = np.random.default_rng(seed + 10_000)
        for layer in net.layers:
            layer.biases[:] = bias_scale * rng.standard_normal(layer.fan_out)
    return net


def one_layer(weights, biases, activation="identity"):
    return DenseNet([DenseLayer(np.array(weights, float), np.array(biases, float), activation)])


@pytest.fixture(scope="session")
def default_context():
    """Default configuration, trained once per session."""
    return prepare(PipelineConfig())


@pytest.fixture(scope="session")
def seed_contexts():
    base = PipelineConfig()
    return [prepare(base.reseeded(s)) for s in (0, 1, 2)]
