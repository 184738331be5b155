import numpy as np
import pytest

from stic.model import ModelParams, build_loss_tape
from stic.windowing import TimeSeriesDataset, build_window_representation

# the five-variable, three-slice example graph: (source, target, lag), 1-based
EXAMPLE_EDGES = [
    (1, 3, 2), (1, 5, 2), (4, 2, 2),
    (3, 2, 1), (3, 4, 1), (3, 5, 1), (5, 4, 1),
    (1, 2, 0), (1, 4, 0), (5, 2, 0),
]


def example_matrix():
    edges = np.zeros((5, 5, 3), dtype=bool)
    for i, j, tau in EXAMPLE_EDGES:
        edges[i - 1, j - 1, tau] = True
    return edges


def random_problem(seed, d=None, tau_bar=None, T=None, activation="tanh", n_kernels=1):
    """Small random windows plus freshly initialised parameters."""
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(2, 4))
    tau_bar = tau_bar or int(rng.integers(1, 3))
    T = T or int(rng.integers(tau_bar + 6, 13))
    X = TimeSeriesDataset(rng.standard_normal((d, T)))
    W = build_window_representation(X, tau_bar, lag0_at_target=True)
    params = ModelParams.initialize(d, tau_bar + 1, n_kernels=n_kernels, seed=seed,
                                    score_activation=activation)
    return W, params


def loss_fn_for(W, params, fused=True, kernel_backend=None):
    def loss_fn(arrays):
        return build_loss_tape(W, params.replace(arrays), fused=fused, kernel_backend=kernel_backend)
    return loss_fn


@pytest.fixture
def example_edges():
    return example_matrix()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
