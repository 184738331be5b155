"""Synthetic window causal graphs and additive-noise time series.

Every candidate edge ``(i, j, tau)`` with ``tau <= tau_tilde`` is drawn
independently. Lag-0 candidates are limited to pairs that respect a random
variable ordering so the contemporaneous slice is acyclic. Edge weights are
uniform on ``(-2, -0.5] U [0.5, 2)``, each interval with probability 1/2.

``X_j^t = sum_{i, tau} w[i, j, tau] * g(X_i^{t - tau}) + eps_j^t`` with
``g`` the identity (linear) or cosine, and noise standard normal or U[0, 1].

Dense linear systems with weights of that size are almost never stable, so
by default the whole weight tensor is scaled by one factor until the
companion matrix has spectral radius below ``spectral_target``.
``GroundTruth.weights`` keeps the sampled values; ``GroundTruth.scale``
records the factor. ``stabilization="reject"`` instead redraws weights
whenever the simulation blows past ``max_abs``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stic.errors import ConfigError, StabilityError
from stic.windowing import TimeSeriesDataset

MECHANISMS = ("linear", "cosine")
NOISES = {
    "gaussian": "gaussian", "gaussian_std_normal": "gaussian", "normal": "gaussian",
    "uniform": "uniform", "uniform_01": "uniform",
}


def default_max_lag(d):
    return max(1, int(round(0.4 * d)))


@dataclass
class GeneratorSpec:
    d: int
    T: int
    mechanism: str = "linear"
    noise: str = "gaussian"
    edge_probability: float = 0.5
    tau_tilde: int = None
    rng_seed: int = 0
    burn_in: int = 200
    noise_scale: float = 1.0
    stabilization: str = "rescale"
    spectral_target: float = 0.9
    max_abs: float = 1e6
    max_retries: int = 100

    def __post_init__(self):
        if self.tau_tilde is None:
            self.tau_tilde = default_max_lag(self.d)
        self.noise = NOISES.get(self.noise, self.noise)
        self.validate()

    def validate(self):
        if self.d < 2:
            raise ConfigError(f"need d >= 2, got {self.d}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.noise not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown noise {self.noise!r}")
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ConfigError("edge_probability must lie in [0, 1]")
        if self.tau_tilde < 1:
            raise ConfigError("tau_tilde must be >= 1")
        if self.T < self.tau_tilde + 3:
            raise ConfigError(f"T={self.T} too short; tau_tilde={self.tau_tilde} needs T >= {self.tau_tilde + 3}")
        if self.stabilization not in ("rescale", "reject"):
            raise ConfigError(f"stabilization must be 'rescale' or 'reject', got {self.stabilization!r}")
        if not 0.0 < self.spectral_target < 1.0:
            raise ConfigError("spectral_target must lie in (0, 1)")
        if self.burn_in < 0 or self.noise_scale < 0:
            raise ConfigError("burn_in and noise_scale must be non-negative")

    @property
    def total_steps(self):
        """Initial lag buffer plus burn-in plus recorded steps."""
        return self.tau_tilde + self.burn_in + self.T

    def streams(self):
        """Independent generators for graph, weights and noise."""
        graph, weights, noise = np.random.SeedSequence(self.rng_seed).spawn(3)
        return np.random.default_rng(graph), np.random.default_rng(weights), np.random.default_rng(noise)


@dataclass
class GroundTruth:
    adjacency: np.ndarray
    weights: np.ndarray
    intra_slice_order: np.ndarray
    mechanism: str = "linear"
    noise: str = "gaussian"
    scale: float = 1.0
    retries: int = 0
    variable_names: list = field(default=None)

    @property
    def d(self):
        return self.adjacency.shape[0]

    @property
    def tau_tilde(self):
        return self.adjacency.shape[2] - 1

    @property
    def effective_weights(self):
        return self.weights * self.scale


def sample_weights(adjacency, rng):
    shape = adjacency.shape
    magnitude = rng.uniform(0.5, 2.0, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return np.where(adjacency, sign * magnitude, 0.0)


def companion_radius(weights):
    """Spectral radius of the reduced-form VAR implied by a linear weight tensor."""
    d = weights.shape[0]
    lags = weights.shape[2] - 1
    A0 = weights[:, :, 0].T
    if lags == 0:
        return 0.0
    inv = np.linalg.inv(np.eye(d) - A0)
    comp = np.zeros((d * lags, d * lags))
    for tau in range(1, lags + 1):
        comp[:d, (tau - 1) * d:tau * d] = inv @ weights[:, :, tau].T
    comp[d:, :-d] = np.eye(d * (lags - 1))
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def stabilizing_scale(weights, target, iters=60):
    """Largest factor (found by bisection) that brings the companion radius below ``target``."""
    if companion_radius(weights) < target:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if companion_radius(mid * weights) < target:
            lo = mid
        else:
            hi = mid
    return lo


def sample_graph(spec: GeneratorSpec, rng=None) -> GroundTruth:
    if rng is None:
        graph_rng, weight_rng, _ = spec.streams()
    else:
        graph_rng = weight_rng = rng
    d, L = spec.d, spec.tau_tilde + 1
    order = graph_rng.permutation(d)
    rank = np.empty(d, dtype=int)
    rank[order] = np.arange(d)
    adjacency = graph_rng.random((d, d, L)) < spec.edge_probability
    adjacency[:, :, 0] &= rank[:, None] < rank[None, :]
    weights = sample_weights(adjacency, weight_rng)
    scale = 1.0
    if spec.mechanism == "linear" and spec.stabilization == "rescale":
        scale = stabilizing_scale(weights, spec.spectral_target)
    return GroundTruth(adjacency, weights, order, spec.mechanism, spec.noise, scale)


class _BlowUp(Exception):
    pass


def _noise(spec, rng):
    shape = (spec.d, spec.total_steps)
    if spec.noise == "gaussian":
        return spec.noise_scale * rng.standard_normal(shape)
    return spec.noise_scale * rng.random(shape)


def _run(weights, order, mechanism, eps, lags, max_abs):
    d, total = eps.shape
    g = np.cos if mechanism == "cosine" else (lambda x: x)
    X = np.zeros((d, total))
    X[:, :lags] = eps[:, :lags]
    W0 = weights[:, :, 0]
    lagged_w = [weights[:, :, tau].T for tau in range(1, lags + 1)]
    parents0 = [np.flatnonzero(W0[:, j]) for j in range(d)]
    gx_hist = [g(X[:, t]) for t in range(lags)]
    for t in range(lags, total):
        drive = eps[:, t].copy()
        for tau, A in enumerate(lagged_w, start=1):
            drive += A @ gx_hist[t - tau]
        xt = X[:, t]
        for j in order:
            pa = parents0[j]
            xt[j] = drive[j] + (W0[pa, j] @ g(xt[pa]) if len(pa) else 0.0)
        if np.max(np.abs(xt)) > max_abs:
            raise _BlowUp(t)
        gx_hist.append(g(xt))
    return X


def simulate(truth: GroundTruth, spec: GeneratorSpec, noise=None) -> TimeSeriesDataset:
    """Run the structural equations and return the last ``spec.T`` steps.

    ``noise`` overrides the drawn noise with a ``(d, spec.total_steps)``
    array. Under ``stabilization="reject"`` a blow-up redraws the weights in
    place on ``truth`` (new seed stream per attempt).
    """
    _, _, noise_rng = spec.streams()
    eps = _noise(spec, noise_rng) if noise is None else np.asarray(noise, dtype=np.float64)
    if eps.shape != (spec.d, spec.total_steps):
        raise ConfigError(f"noise override must have shape {(spec.d, spec.total_steps)}")
    retry_seeds = np.random.SeedSequence([spec.rng_seed, 1]).spawn(spec.max_retries)
    for attempt in range(spec.max_retries + 1):
        try:
            X = _run(truth.effective_weights, truth.intra_slice_order, truth.mechanism, eps,
                     truth.tau_tilde, spec.max_abs)
        except _BlowUp as exc:
            if spec.stabilization != "reject" or attempt == spec.max_retries:
                raise StabilityError(
                    f"simulation exceeded |X| > {spec.max_abs:g} at step {exc.args[0]} "
                    f"after {attempt} weight redraws"
                ) from None
            truth.weights = sample_weights(truth.adjacency, np.random.default_rng(retry_seeds[attempt]))
            truth.retries = attempt + 1
            continue
        names = truth.variable_names or [f"X{i + 1}" for i in range(spec.d)]
        return TimeSeriesDataset(X[:, -spec.T:], names)


def generate(spec: GeneratorSpec):
    """Sample a graph and simulate it; returns ``(dataset, truth)``."""
    truth = sample_graph(spec)
    return simulate(truth, spec), truth
