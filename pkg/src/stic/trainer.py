"""Full-batch gradient descent on the summed squared prediction error."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from stic.datagen import default_max_lag
from stic.errors import ConfigError, DivergenceError, NumericalError
from stic.gradcore import forward_and_backward
from stic.model import SCORE_ACTIVATIONS, CausalScoreTensor, ModelParams, build_loss_tape, effects_from_tape, scores_from_effects
from stic.windowing import TimeSeriesDataset, build_window_representation, min_length, standardize

log = logging.getLogger(__name__)

SLOPE_MIN = 1e-6
SLOPE_MAX = 1.0


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    max_epochs: int = 5000
    # epochs without a >= min_rel_improvement drop below the best loss
    patience: int = 200
    min_rel_improvement: float = 1e-3
    tau_bar: int = None
    n_kernels: int = 1
    hidden_multiplier: int = 4
    rng_seed: int = 0
    standardize: bool = True
    momentum: float = 0.0
    score_activation: str = "tanh"
    # lag 0 is read from the target step itself, lag tau from tau steps back
    lag0_at_target: bool = True
    kernel_backend: str = None

    def validate(self, d=None):
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.tau_bar is not None and self.tau_bar < 1:
            raise ConfigError("tau_bar must be >= 1")
        if self.n_kernels < 1 or self.hidden_multiplier < 1:
            raise ConfigError("n_kernels and hidden_multiplier must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.score_activation not in SCORE_ACTIVATIONS:
            raise ConfigError(f"score_activation must be one of {SCORE_ACTIVATIONS}")

    def resolved_tau_bar(self, d):
        return self.tau_bar if self.tau_bar is not None else default_max_lag(d)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    loss_curve: list
    epochs_run: int
    final_loss: float
    stop_reason: str
    # wall-clock time is logged but kept out of saved artifacts
    wall_seconds: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing=False):
        out = {
            "epochs_run": self.epochs_run,
            "final_loss": self.final_loss,
            "stop_reason": self.stop_reason,
            "loss_curve": list(self.loss_curve),
        }
        if include_timing:
            out["wall_seconds"] = self.wall_seconds
        return out


def _prepare(X: TimeSeriesDataset, cfg: TrainConfig):
    tau_bar = cfg.resolved_tau_bar(X.d)
    need = min_length(tau_bar)
    if X.T < need:
        raise ConfigError(f"T={X.T} too short for tau_bar={tau_bar}; need T >= {need}")
    if cfg.standardize:
        X = standardize(X)[0]
    return build_window_representation(X, tau_bar, lag0_at_target=cfg.lag0_at_target)


def train(X: TimeSeriesDataset, cfg: TrainConfig = None):
    """Fit STIC to ``X``; returns ``(scores, params, report)``.

    Every epoch takes one step ``theta <- theta - lr * grad`` over all
    windows. Training stops after ``max_epochs`` or once the loss has gone
    ``patience`` epochs without improving on its best value by a relative
    ``min_rel_improvement``.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    start = time.perf_counter()
    W = _prepare(X, cfg)
    params = ModelParams.initialize(
        W.d, W.tau_hat, n_kernels=cfg.n_kernels, hidden_multiplier=cfg.hidden_multiplier,
        seed=cfg.rng_seed, score_activation=cfg.score_activation,
    )
    tape = build_loss_tape(W, params, fused=True, kernel_backend=cfg.kernel_backend)
    theta = {k: np.array(v) for k, v in params.to_dict().items()}
    slope_names = [k for k in theta if k.startswith("slope_m.") or k == "fnn.slope"]
    velocity = {k: np.zeros_like(v) for k, v in theta.items()}

    curve = []
    best = np.inf
    since_best = 0
    stop = "max_epochs"
    lr, mu = cfg.learning_rate, cfg.momentum
    for epoch in range(cfg.max_epochs):
        try:
            loss, grads = forward_and_backward(tape, theta if epoch else None)
        except NumericalError:
            loss = np.nan
        if not np.isfinite(loss):
            last = curve[-1] if curve else None
            raise DivergenceError(f"loss became non-finite at epoch {epoch}", epoch, last)
        curve.append(loss)
        if loss < best * (1.0 - cfg.min_rel_improvement):
            best = loss
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                stop = "plateau"
                break
        with np.errstate(over="ignore", invalid="ignore"):
            for k, g in grads.items():
                if mu:
                    velocity[k] = mu * velocity[k] - lr * g
                    theta[k] = theta[k] + velocity[k]
                else:
                    theta[k] = theta[k] - lr * g
        for k in slope_names:
            theta[k] = np.clip(theta[k], SLOPE_MIN, SLOPE_MAX)
        if not all(np.isfinite(v).all() for v in theta.values()):
            raise DivergenceError(f"parameters became non-finite at epoch {epoch}", epoch, loss)

    final = params.replace(theta)
    try:
        final_loss, _ = forward_and_backward(tape, theta)
    except NumericalError:
        raise DivergenceError("final loss is non-finite", len(curve), curve[-1]) from None
    scores = scores_from_effects(effects_from_tape(tape), X.variable_names)
    report = TrainReport(curve, len(curve), float(final_loss), stop, time.perf_counter() - start)
    log.info("trained %d epochs (%s), final loss %.6g, %.2fs",
             report.epochs_run, stop, report.final_loss, report.wall_seconds)
    return scores, final, report


def score_tensor(X: TimeSeriesDataset, params: ModelParams, cfg: TrainConfig = None) -> CausalScoreTensor:
    """Scores produced by ``params`` on ``X`` under the same preprocessing as training."""
    from stic.model import time_invariance_forward
    cfg = cfg or TrainConfig(tau_bar=params.tau_hat - 1)
    W = _prepare(X, cfg)
    out = time_invariance_forward(W, params)
    out.variable_names = X.variable_names
    return out
