"""From continuous edge scores to a binary window causal matrix and edge metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stic.errors import ConfigError, ShapeError
from stic.model import CausalScoreTensor


@dataclass
class BinaryCausalMatrix:
    """Boolean ``d x d x L`` matrix; ``edges[i, j, tau]`` means ``X_i -> X_j`` at lag ``tau``."""

    edges: np.ndarray
    threshold: float = None
    variable_names: list = None

    def __post_init__(self):
        self.edges = np.array(self.edges, dtype=bool)
        if self.edges.ndim != 3 or self.edges.shape[0] != self.edges.shape[1]:
            raise ShapeError(f"edges must be d x d x L, got {self.edges.shape}")
        d = self.edges.shape[0]
        if self.edges[np.arange(d), np.arange(d), 0].any():
            raise ShapeError("lag-0 self-loops are not allowed")

    @property
    def d(self):
        return self.edges.shape[0]

    @property
    def lag_depth(self):
        return self.edges.shape[2]

    def edge_list(self):
        """``(i, j, tau)`` triples (0-based) in row-major order."""
        return [tuple(int(v) for v in idx) for idx in np.argwhere(self.edges)]

    def __eq__(self, other):
        return isinstance(other, BinaryCausalMatrix) and np.array_equal(self.edges, other.edges)


@dataclass
class EdgeMetrics:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float
    # set when a ratio was 0/0 and reported as 0
    undefined: tuple = ()

    def to_dict(self):
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "undefined": list(self.undefined),
        }


def binarize(scores, p):
    """Keep every edge whose score is at least ``p``; lag-0 self-loops are always dropped."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {p}")
    names = getattr(scores, "variable_names", None)
    s = scores.scores if isinstance(scores, CausalScoreTensor) else np.asarray(scores, dtype=float)
    edges = ~(s < p)
    d = s.shape[0]
    edges[np.arange(d), np.arange(d), 0] = False
    return BinaryCausalMatrix(edges, threshold=float(p), variable_names=names)


def truncate_lags(M, tau_tilde):
    """Keep lag slices ``0 .. tau_tilde``."""
    arr = M.edges if isinstance(M, BinaryCausalMatrix) else M.scores
    depth = arr.shape[2]
    if tau_tilde < 0 or tau_tilde + 1 > depth:
        raise ConfigError(f"cannot keep {tau_tilde + 1} lag slices out of {depth}")
    keep = slice(0, tau_tilde + 1)
    if isinstance(M, BinaryCausalMatrix):
        return BinaryCausalMatrix(M.edges[:, :, keep], M.threshold, M.variable_names)
    return CausalScoreTensor(M.scores[:, :, keep], M.effects[:, :, keep], M.variable_names)


def evaluate(pred, truth, include_self_lags=True):
    """Count (source, target, lag) triples; the lag-0 diagonal is never counted.

    With ``include_self_lags=False`` the lagged self-edges ``(i, i, tau > 0)``
    are ignored as well.
    """
    P = pred.edges if isinstance(pred, BinaryCausalMatrix) else np.asarray(pred, dtype=bool)
    G = truth.edges if isinstance(truth, BinaryCausalMatrix) else np.asarray(truth, dtype=bool)
    if P.shape != G.shape:
        raise ShapeError(f"prediction {P.shape} and truth {G.shape} differ; truncate first")
    d = P.shape[0]
    counted = np.ones(P.shape, dtype=bool)
    diag = np.arange(d)
    if include_self_lags:
        counted[diag, diag, 0] = False
    else:
        counted[diag, diag, :] = False
    tp = int(np.sum(P & G & counted))
    fp = int(np.sum(P & ~G & counted))
    fn = int(np.sum(~P & G & counted))
    undefined = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return EdgeMetrics(tp, fp, fn, precision, recall, f1, tuple(undefined))
