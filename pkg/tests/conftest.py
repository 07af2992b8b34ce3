import numpy as np
import pytest

from bridgelab.smallnet import DriftNet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def identity_net(n_steps=4, dim=2):
    """Net whose raw output equals its input: no hidden layers, no embedding."""
    net = DriftNet(dim=dim, n_steps=n_steps, hidden=(), emb_dim=0, zero_last=False)
    net.params["W0"] = np.eye(dim)
    net.params["b0"] = np.zeros(dim)
    return net


def constant_net(value, n_steps=4, dim=2):
    """Net whose raw output is ``value`` everywhere."""
    net = DriftNet(dim=dim, n_steps=n_steps, hidden=(), emb_dim=0, zero_last=True)
    net.params["b0"] = np.asarray(value, dtype=np.float64).copy()
    return net


def random_net(seed=0, n_steps=4, hidden=(16, 16), emb_dim=4, scale=0.3):
    """Small net with a non-zero output layer so predictions vary with (k, x)."""
    net = DriftNet(n_steps=n_steps, hidden=hidden, emb_dim=emb_dim, seed=seed, zero_last=False)
    r = np.random.default_rng(seed + 100)
    for name in net.params:
        if name.startswith("b"):
            net.params[name] = scale * r.standard_normal(net.params[name].shape)
    return net


class OracleNet:
    """Stand-in net: ``fn(k, x)`` gives the raw output for a batch."""

    def __init__(self, fn):
        self.fn = fn

    def forward(self, k, x):
        return self.fn(np.asarray(k), np.asarray(x))

    def fingerprint(self):
        return "oracle"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
