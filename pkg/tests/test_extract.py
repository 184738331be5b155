import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stic.errors import ConfigError, ShapeError
from stic.extract import BinaryCausalMatrix, binarize, evaluate, truncate_lags
from stic.model import CausalScoreTensor


def brute_force_counts(pred, truth, include_self_lags=True):
    d, _, L = pred.shape
    tp = fp = fn = 0
    for i in range(d):
        for j in range(d):
            for tau in range(L):
                if i == j and (tau == 0 or not include_self_lags):
                    continue
                p, t = pred[i, j, tau], truth[i, j, tau]
                tp += p and t
                fp += p and not t
                fn += t and not p
    return tp, fp, fn


def _random_binary(rng, d, L, density=0.5):
    m = rng.random((d, d, L)) < density
    m[np.arange(d), np.arange(d), 0] = False
    return m


def test_binarize_threshold_ties_keep_the_edge():
    s = np.zeros((2, 2, 2))
    s[0, 1, 0] = 0.3
    s[1, 0, 1] = 0.2999999
    s[0, 0, 0] = 0.9
    M = binarize(s, 0.3)
    assert M.edges[0, 1, 0] and not M.edges[1, 0, 1]
    assert not M.edges[0, 0, 0]
    assert M.threshold == 0.3


def test_binarize_extremes():
    s = np.random.default_rng(0).random((3, 3, 2))
    assert binarize(s, 0.0).edges.sum() == 3 * 3 * 2 - 3
    assert binarize(s, 1.0).edges.sum() == 0
    with pytest.raises(ConfigError):
        binarize(s, 1.5)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(0, 1), q=st.floats(0, 1))
def test_binarize_monotone_and_masked(seed, p, q):
    rng = np.random.default_rng(seed)
    d, L = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    S = CausalScoreTensor(rng.random((d, d, L)))
    lo, hi = sorted((p, q))
    a, b = binarize(S, lo).edges, binarize(S, hi).edges
    assert np.all(b <= a)
    assert not a[np.arange(d), np.arange(d), 0].any()


def test_matrix_rejects_lag0_self_loop():
    e = np.zeros((2, 2, 1), bool)
    e[1, 1, 0] = True
    with pytest.raises(ShapeError):
        BinaryCausalMatrix(e)


def test_edge_list_of_example(example_edges):
    M = BinaryCausalMatrix(example_edges)
    assert len(M.edge_list()) == 10
    assert (0, 2, 2) in M.edge_list()


def test_truncate_lags():
    e = np.zeros((2, 2, 4), bool)
    e[0, 1, 3] = e[0, 1, 1] = True
    M = truncate_lags(BinaryCausalMatrix(e), 2)
    assert M.lag_depth == 3 and M.edges.sum() == 1
    S = truncate_lags(CausalScoreTensor(np.ones((2, 2, 4))), 0)
    assert S.lag_depth == 1
    with pytest.raises(ConfigError):
        truncate_lags(BinaryCausalMatrix(e), 4)


def test_evaluate_perfect_and_empty(example_edges):
    m = evaluate(BinaryCausalMatrix(example_edges), BinaryCausalMatrix(example_edges))
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
    empty = BinaryCausalMatrix(np.zeros_like(example_edges))
    m = evaluate(empty, BinaryCausalMatrix(example_edges))
    assert m.precision == 0.0 and "precision" in m.undefined
    assert m.recall == 0.0 and m.f1 == 0.0
    m = evaluate(empty, empty)
    assert set(m.undefined) == {"precision", "recall", "f1"}


def test_evaluate_shape_mismatch():
    a = BinaryCausalMatrix(np.zeros((2, 2, 2), bool))
    b = BinaryCausalMatrix(np.zeros((2, 2, 3), bool))
    with pytest.raises(ShapeError):
        evaluate(a, b)


def test_self_lags_can_be_excluded():
    truth = np.zeros((2, 2, 2), bool)
    truth[0, 0, 1] = True
    pred = np.zeros((2, 2, 2), bool)
    assert evaluate(pred, truth).false_negatives == 1
    assert evaluate(pred, truth, include_self_lags=False).false_negatives == 0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), include=st.booleans())
def test_evaluate_matches_triple_loop(seed, include):
    rng = np.random.default_rng(seed)
    d, L = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    pred, truth = _random_binary(rng, d, L), _random_binary(rng, d, L, rng.random())
    m = evaluate(BinaryCausalMatrix(pred), BinaryCausalMatrix(truth), include_self_lags=include)
    tp, fp, fn = brute_force_counts(pred, truth, include)
    assert (m.true_positives, m.false_positives, m.false_negatives) == (tp, fp, fn)
    if tp:
        P, R = tp / (tp + fp), tp / (tp + fn)
        assert m.f1 == pytest.approx(2 * P * R / (P + R), rel=1e-12)
