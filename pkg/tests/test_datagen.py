import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stic.datagen import (
    GeneratorSpec, GroundTruth, companion_radius, generate, sample_graph, simulate, stabilizing_scale,
)
from stic.errors import ConfigError, StabilityError


def is_acyclic(adj0):
    """Kahn's algorithm on a d x d boolean matrix."""
    d = adj0.shape[0]
    indeg = adj0.sum(axis=0).astype(int)
    ready = [j for j in range(d) if indeg[j] == 0]
    seen = 0
    while ready:
        i = ready.pop()
        seen += 1
        for j in np.flatnonzero(adj0[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    return seen == d


def test_spec_defaults_and_validation():
    spec = GeneratorSpec(5, 100)
    assert spec.tau_tilde == 2 and spec.edge_probability == 0.5 and spec.burn_in == 200
    assert GeneratorSpec(10, 100).tau_tilde == 4
    assert GeneratorSpec(2, 100).tau_tilde == 1
    assert GeneratorSpec(3, 10, noise="uniform_01").noise == "uniform"
    for bad in (dict(edge_probability=1.5), dict(tau_tilde=0), dict(T=4), dict(mechanism="relu"),
                dict(noise="laplace"), dict(stabilization="clip")):
        kwargs = dict(d=5, T=100)
        kwargs.update(bad)
        with pytest.raises(ConfigError):
            GeneratorSpec(**kwargs)


def test_empty_graph():
    truth = sample_graph(GeneratorSpec(4, 50, edge_probability=0.0, rng_seed=1))
    assert not truth.adjacency.any() and not truth.weights.any()


def test_full_graph_combinatorics():
    truth = sample_graph(GeneratorSpec(3, 50, edge_probability=1.0, tau_tilde=2, rng_seed=3))
    assert truth.adjacency[:, :, 0].sum() == 3
    assert truth.adjacency[:, :, 1:].all()
    order = list(truth.intra_slice_order)
    for i, j in np.argwhere(truth.adjacency[:, :, 0]):
        assert order.index(i) < order.index(j)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(2, 8), seed=st.integers(0, 2**31), p=st.floats(0, 1))
def test_graph_invariants(d, seed, p):
    truth = sample_graph(GeneratorSpec(d, 50, edge_probability=p, rng_seed=seed))
    A, Wt = truth.adjacency, truth.weights
    assert np.array_equal(Wt != 0, A)
    mags = np.abs(Wt[A])
    assert np.all((mags >= 0.5) & (mags < 2))
    assert not A[np.arange(d), np.arange(d), 0].any()
    assert is_acyclic(A[:, :, 0])
    assert sorted(truth.intra_slice_order) == list(range(d))


def test_weight_sampler_statistics():
    weights = []
    seed = 0
    while len(weights) < 10_000:
        truth = sample_graph(GeneratorSpec(10, 50, edge_probability=1.0, rng_seed=seed))
        weights.extend(truth.weights[truth.adjacency])
        seed += 1
    w = np.array(weights[:10_000])
    assert not np.any(np.abs(w) < 0.5)
    assert np.all(np.abs(w) < 2)
    assert abs(np.mean(w > 0) - 0.5) <= 0.02


def test_rescaling_reaches_target_radius():
    truth = sample_graph(GeneratorSpec(5, 100, rng_seed=0))
    assert truth.scale < 1
    assert companion_radius(truth.effective_weights) < 0.9
    assert companion_radius(truth.weights) >= 0.9


def test_stabilizing_scale_is_one_when_already_stable():
    w = np.zeros((2, 2, 2))
    w[0, 1, 1] = 0.5
    assert stabilizing_scale(w, 0.9) == 1.0


def _single_edge_truth(weight, tau=1):
    A = np.zeros((2, 2, 2), bool)
    A[0, 1, tau] = True
    return GroundTruth(A, A * weight, np.array([0, 1]))


def test_single_edge_zero_noise_recursion():
    spec = GeneratorSpec(2, 40, tau_tilde=1, rng_seed=0)
    noise = np.random.default_rng(1).standard_normal((2, spec.total_steps))
    noise[1] = 0.0
    X = simulate(_single_edge_truth(1.3), spec, noise=noise).values
    np.testing.assert_array_equal(X[1, 1:], 1.3 * X[0, :-1])


def test_contemporaneous_edge_uses_current_step():
    spec = GeneratorSpec(2, 30, tau_tilde=1, rng_seed=0)
    noise = np.random.default_rng(1).standard_normal((2, spec.total_steps))
    noise[1] = 0.0
    X = simulate(_single_edge_truth(-0.7, tau=0), spec, noise=noise).values
    np.testing.assert_array_equal(X[1], -0.7 * X[0])


def test_noise_override_shape_checked():
    spec = GeneratorSpec(2, 30, tau_tilde=1)
    with pytest.raises(ConfigError):
        simulate(_single_edge_truth(1.0), spec, noise=np.zeros((2, 30)))


@pytest.mark.parametrize("noise,mean,std", [("gaussian", 0.0, 1.0), ("uniform", 0.5, np.sqrt(1 / 12))])
def test_empty_graph_is_pure_noise(noise, mean, std):
    spec = GeneratorSpec(3, 4000, noise=noise, edge_probability=0.0, rng_seed=2)
    X, _ = generate(spec)
    n = X.T
    assert np.all(np.abs(X.values.mean(axis=1) - mean) < 3 * std / np.sqrt(n) + 1e-12)
    assert np.all(np.abs(X.values.std(axis=1) - std) < 3 * std / np.sqrt(2 * n) * 1.5)
    if noise == "uniform":
        assert X.values.min() >= 0 and X.values.max() < 1


def test_same_seed_reproduces_bit_exactly():
    a, ta = generate(GeneratorSpec(5, 300, rng_seed=11))
    b, tb = generate(GeneratorSpec(5, 300, rng_seed=11))
    assert a.values.tobytes() == b.values.tobytes()
    assert np.array_equal(ta.weights, tb.weights)
    c, _ = generate(GeneratorSpec(5, 300, rng_seed=12))
    assert not np.array_equal(a.values, c.values)


def test_cosine_mechanism_bounded_drive():
    spec = GeneratorSpec(4, 200, mechanism="cosine", rng_seed=5)
    truth = sample_graph(spec)
    assert truth.scale == 1.0
    noise = np.zeros((4, spec.total_steps))
    X = simulate(truth, spec, noise=noise).values
    indeg = truth.adjacency.sum(axis=(0, 2))
    assert np.all(np.abs(X) <= 2 * indeg[:, None] + 1e-12)


def test_reject_mode_gives_up_with_stability_error():
    spec = GeneratorSpec(5, 200, rng_seed=0, stabilization="reject", max_retries=3,
                         edge_probability=1.0)
    truth = sample_graph(spec)
    assert truth.scale == 1.0
    with pytest.raises(StabilityError):
        simulate(truth, spec)


def test_reject_mode_redraws_until_stable():
    # a single self-loop is explosive for |w| > 1 and stable below
    spec = GeneratorSpec(2, 100, tau_tilde=1, rng_seed=0, stabilization="reject", max_retries=100,
                         max_abs=1e3)
    A = np.zeros((2, 2, 2), bool)
    A[0, 0, 1] = True
    truth = GroundTruth(A, A * 1.9, np.array([0, 1]))
    X = simulate(truth, spec)
    assert truth.retries >= 1
    assert abs(truth.weights[0, 0, 1]) < 1.9
    assert np.abs(X.values).max() <= 1e3
