"""The STIC network.

Two parallel blocks share the window representation:

* the time-invariance block multiplies every window by one kernel ``K_t``,
  mean-pools the products over windows and maps the pooled ``d x tau_hat``
  feature through a two-layer network to a ``d x d x tau_hat`` tensor of edge
  effects (self-loops at lag 0 masked to zero);
* the mechanism-invariance block applies ``N`` nested kernel/PReLU layers to
  each window.

A window's prediction sums, for every lag and source, the transformed
source value times the effect of that (source, target, lag) edge. Training
minimises the summed squared error over all windows.

The score head is ``tanh`` by default: effects are signed and the existence
score of an edge is the effect magnitude. ``score_activation="sigmoid"``
gives non-negative effects that double as scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stic import backend
from stic.errors import ConfigError, ShapeError
from stic.gradcore import Tape, _prelu, _sigmoid

SCORE_ACTIVATIONS = ("tanh", "sigmoid")


def self_loop_mask(d, depth):
    mask = np.ones((d, d, depth))
    mask[np.arange(d), np.arange(d), 0] = 0.0
    return mask


@dataclass
class ModelParams:
    kernel_t: np.ndarray
    kernels_m: list
    prelu_slopes: np.ndarray
    fnn_w1: np.ndarray
    fnn_b1: np.ndarray
    fnn_slope: float
    fnn_w2: np.ndarray
    fnn_b2: np.ndarray
    score_activation: str = "tanh"
    rng_seed: int = None

    def __post_init__(self):
        self.kernel_t = np.array(self.kernel_t, dtype=np.float64)
        self.kernels_m = [np.array(k, dtype=np.float64) for k in self.kernels_m]
        self.prelu_slopes = np.array(self.prelu_slopes, dtype=np.float64).reshape(-1)
        self.fnn_slope = float(self.fnn_slope)
        for name in ("fnn_w1", "fnn_b1", "fnn_w2", "fnn_b2"):
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64))
        self.validate()

    @classmethod
    def initialize(cls, d, tau_hat, n_kernels=1, hidden_multiplier=4, seed=0,
                   score_activation="tanh"):
        """Draw fresh parameters: ``U(-s, s)`` with ``s = 1/sqrt(fan_in)``, slopes 0.25."""
        if n_kernels < 1:
            raise ConfigError("need at least one mechanism kernel")
        rng = np.random.default_rng(seed)
        n_in = d * tau_hat
        hidden = hidden_multiplier * n_in
        n_out = d * d * tau_hat

        def uniform(shape, fan_in):
            s = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-s, s, size=shape)

        return cls(
            kernel_t=uniform((d, tau_hat), 1),
            kernels_m=[uniform((d, tau_hat), 1) for _ in range(n_kernels)],
            prelu_slopes=np.full(n_kernels, 0.25),
            fnn_w1=uniform((hidden, n_in), n_in),
            fnn_b1=uniform(hidden, n_in),
            fnn_slope=0.25,
            fnn_w2=uniform((n_out, hidden), hidden),
            fnn_b2=uniform(n_out, hidden),
            score_activation=score_activation,
            rng_seed=seed,
        )

    @property
    def d(self):
        return self.kernel_t.shape[0]

    @property
    def tau_hat(self):
        return self.kernel_t.shape[1]

    @property
    def n_kernels(self):
        return len(self.kernels_m)

    @property
    def hidden(self):
        return self.fnn_w1.shape[0]

    def validate(self):
        d, w = self.kernel_t.shape
        if self.score_activation not in SCORE_ACTIVATIONS:
            raise ConfigError(f"score_activation must be one of {SCORE_ACTIVATIONS}")
        for k in self.kernels_m:
            if k.shape != (d, w):
                raise ShapeError(f"mechanism kernel shape {k.shape} != {(d, w)}")
        if len(self.prelu_slopes) != len(self.kernels_m):
            raise ShapeError("one PReLU slope per mechanism kernel")
        h = self.fnn_w1.shape[0]
        expected = {
            "fnn_w1": (h, d * w), "fnn_b1": (h,),
            "fnn_w2": (d * d * w, h), "fnn_b2": (d * d * w,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != {shape}")

    # flat name -> array view used by tapes, optimisers and checkpoints
    def to_dict(self):
        out = {"kernel_t": self.kernel_t}
        for n, k in enumerate(self.kernels_m):
            out[f"kernel_m.{n}"] = k
            out[f"slope_m.{n}"] = np.asarray(self.prelu_slopes[n])
        out.update({
            "fnn.w1": self.fnn_w1, "fnn.b1": self.fnn_b1, "fnn.slope": np.asarray(self.fnn_slope),
            "fnn.w2": self.fnn_w2, "fnn.b2": self.fnn_b2,
        })
        return out

    def replace(self, arrays):
        """New params with the named arrays swapped in."""
        cur = {k: np.array(v) for k, v in self.to_dict().items()}
        cur.update({k: np.array(v, dtype=np.float64) for k, v in arrays.items()})
        n = self.n_kernels
        return ModelParams(
            kernel_t=cur["kernel_t"],
            kernels_m=[cur[f"kernel_m.{i}"] for i in range(n)],
            prelu_slopes=np.array([float(cur[f"slope_m.{i}"]) for i in range(n)]),
            fnn_w1=cur["fnn.w1"], fnn_b1=cur["fnn.b1"], fnn_slope=float(cur["fnn.slope"]),
            fnn_w2=cur["fnn.w2"], fnn_b2=cur["fnn.b2"],
            score_activation=self.score_activation, rng_seed=self.rng_seed,
        )


@dataclass
class CausalScoreTensor:
    """Edge scores indexed ``[source, target, lag]``.

    ``effects`` are the (possibly signed) coefficients used for prediction;
    ``scores`` are their magnitudes, the quantity that gets thresholded.
    """

    scores: np.ndarray
    effects: np.ndarray = None
    variable_names: list = field(default=None)

    def __post_init__(self):
        self.scores = np.array(self.scores, dtype=np.float64)
        if self.effects is None:
            self.effects = self.scores.copy()
        if self.scores.ndim != 3 or self.scores.shape[0] != self.scores.shape[1]:
            raise ShapeError(f"scores must be d x d x L, got {self.scores.shape}")

    @property
    def d(self):
        return self.scores.shape[0]

    @property
    def lag_depth(self):
        return self.scores.shape[2]


def _check_windows(W, params):
    if W.d != params.d or W.tau_hat != params.tau_hat:
        raise ShapeError(
            f"windows are {W.d} x {W.tau_hat} but kernels are {params.d} x {params.tau_hat}"
        )


def _score_head(params, pooled):
    z1 = params.fnn_w1 @ pooled.reshape(-1) + params.fnn_b1
    h = _prelu(z1, params.fnn_slope)
    o = params.fnn_w2 @ h + params.fnn_b2
    act = np.tanh(o) if params.score_activation == "tanh" else _sigmoid(o)
    d, w = params.d, params.tau_hat
    return act.reshape(d, d, w) * self_loop_mask(d, w)


def scores_from_effects(effects, names=None):
    return CausalScoreTensor(scores=np.abs(effects), effects=effects, variable_names=names)


def time_invariance_forward(W, params: ModelParams) -> CausalScoreTensor:
    """Edge scores from the time-invariance block."""
    _check_windows(W, params)
    pooled = np.mean(params.kernel_t[None] * W.by_window(), axis=0)
    return scores_from_effects(_score_head(params, pooled))


def mechanism_forward(W_psi, params: ModelParams):
    """Nested ``PReLU(K_m * .)`` transform of a single ``d x tau_hat`` window."""
    W_psi = np.asarray(W_psi, dtype=np.float64)
    if W_psi.shape != params.kernel_t.shape:
        raise ShapeError(f"window shape {W_psi.shape} != {params.kernel_t.shape}")
    a = W_psi
    for k, s in zip(params.kernels_m, params.prelu_slopes):
        a = _prelu(k * a, s)
    return a


def predict_step(W_bar_psi, W_hat):
    """Selected column summation for one window.

    ``x_hat[j] = sum_tau sum_i W_bar[i, col(tau)] * W_hat[i, j, tau]`` with
    ``col(tau) = tau_hat - 1 - tau``.
    """
    effects = W_hat.effects if isinstance(W_hat, CausalScoreTensor) else np.asarray(W_hat)
    W_bar_psi = np.asarray(W_bar_psi, dtype=np.float64)
    return np.einsum("ik,ijk->j", W_bar_psi[:, ::-1], effects)


def predict(W, params: ModelParams, W_hat=None, kernel_backend=None):
    """Predictions for every window, shape ``(d, c)``."""
    _check_windows(W, params)
    if W_hat is None:
        W_hat = time_invariance_forward(W, params)
    k = backend.get(kernel_backend)
    pred = k.window_predict(
        W.by_window(), np.ascontiguousarray(np.stack(params.kernels_m)),
        np.ascontiguousarray(params.prelu_slopes), np.ascontiguousarray(W_hat.effects),
    )
    return np.asarray(pred).T


def loss(X, predictions):
    """Summed squared error between ``predictions`` (``d x c``) and ``X[:, tau_hat:]``."""
    values = X.values if hasattr(X, "values") else np.asarray(X)
    predictions = np.asarray(predictions, dtype=np.float64)
    c = predictions.shape[1]
    targets = values[:, values.shape[1] - c:]
    if targets.shape != predictions.shape:
        raise ShapeError(f"predictions {predictions.shape} vs targets {targets.shape}")
    r = targets - predictions
    return float(np.sum(r * r))


def build_loss_tape(W, params: ModelParams, fused=True, kernel_backend=None):
    """Record the full training loss for windows ``W`` on a fresh :class:`Tape`.

    ``fused`` routes the mechanism block, prediction and squared error
    through one kernel op; otherwise they are spelled out in primitives.
    Both give the same value and gradients.
    """
    _check_windows(W, params)
    d, w = params.d, params.tau_hat
    tape = Tape()
    p = {name: tape.param(name, value) for name, value in params.to_dict().items()}

    windows = tape.const(W.by_window())
    targets = tape.const(np.ascontiguousarray(W.targets.T))

    feats = tape.mul(p["kernel_t"], windows)
    pooled = tape.reshape(tape.mean_pool(feats, axis=0), (d * w,))
    hidden = tape.prelu(tape.affine(p["fnn.w1"], pooled, p["fnn.b1"]), p["fnn.slope"])
    logits = tape.affine(p["fnn.w2"], hidden, p["fnn.b2"])
    act = tape.tanh(logits) if params.score_activation == "tanh" else tape.sigmoid(logits)
    effects = tape.mul(tape.reshape(act, (d, d, w)), tape.const(self_loop_mask(d, w)))
    tape.effects_node = effects.index

    n = params.n_kernels
    if fused:
        kernels = tape.stack([p[f"kernel_m.{i}"] for i in range(n)])
        slopes = tape.stack([p[f"slope_m.{i}"] for i in range(n)])
        tape.window_loss(windows, targets, kernels, slopes, effects, kernel_backend=kernel_backend)
        return tape

    a = windows
    for i in range(n):
        a = tape.prelu(tape.mul(p[f"kernel_m.{i}"], a), p[f"slope_m.{i}"])
    lagged = tape.take(a, np.arange(w - 1, -1, -1), axis=2)
    flat = tape.reshape(lagged, (W.c, d * w))
    select = tape.reshape(tape.transpose(effects, (0, 2, 1)), (d * w, d))
    resid = tape.sub(targets, tape.matmul(flat, select))
    tape.sum(tape.mul(resid, resid))
    return tape


def effects_from_tape(tape):
    return np.array(tape.values[tape.effects_node])
