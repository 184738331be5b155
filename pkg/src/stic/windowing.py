"""Sliding-window representation of a multivariate time series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stic.errors import ConfigError, DataError


@dataclass
class TimeSeriesDataset:
    """``d x T`` observations, one row per variable."""

    values: np.ndarray
    variable_names: list = field(default=None)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"expected a d x T array, got shape {self.values.shape}")
        if self.values.shape[0] < 2:
            raise DataError(f"need at least 2 variables, got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            i, t = np.argwhere(~np.isfinite(self.values))[0]
            raise DataError(f"non-finite value at variable {i + 1}, time {t + 1}")
        if self.variable_names is None:
            self.variable_names = [f"X{i + 1}" for i in range(self.d)]
        self.variable_names = [str(n) for n in self.variable_names]
        if len(self.variable_names) != self.d:
            raise DataError(f"{len(self.variable_names)} names for {self.d} variables")

    @property
    def d(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.values.shape[1]


@dataclass
class Standardization:
    """Per-variable mean and (population) standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: TimeSeriesDataset) -> TimeSeriesDataset:
        return TimeSeriesDataset((X.values - self.mean[:, None]) / self.std[:, None], X.variable_names)

    def invert(self, X: TimeSeriesDataset) -> TimeSeriesDataset:
        return TimeSeriesDataset(X.values * self.std[:, None] + self.mean[:, None], X.variable_names)


def standardize(X: TimeSeriesDataset):
    """Scale every variable to zero mean and unit variance.

    Returns the transformed dataset and the :class:`Standardization` that
    inverts it.
    """
    mean = X.values.mean(axis=1)
    std = X.values.std(axis=1)
    for i, s in enumerate(std):
        if not s > 0.0:
            raise DataError(f"variable {X.variable_names[i]!r} has zero variance")
    record = Standardization(mean, std)
    return record.apply(X), record


@dataclass
class WindowTensor:
    """Stack of ``c`` overlapping ``d x tau_hat`` windows.

    ``windows[:, k, p]`` is column ``k`` of window ``p`` (both 0-based);
    columns are in ascending time order. ``targets[:, p]`` is the value the
    window is used to predict and ``origin_offsets[p]`` the 1-based source
    time of its first column.
    """

    windows: np.ndarray
    targets: np.ndarray
    tau_hat: int
    origin_offsets: np.ndarray
    lag0_at_target: bool = False

    @property
    def c(self):
        return self.windows.shape[2]

    @property
    def d(self):
        return self.windows.shape[0]

    def by_window(self):
        """Contiguous ``(c, d, tau_hat)`` view used by the kernels."""
        return np.ascontiguousarray(np.moveaxis(self.windows, 2, 0))

    def column_of_lag(self, tau):
        return self.tau_hat - 1 - tau


def min_length(tau_bar):
    return tau_bar + 3


def build_window_representation(X: TimeSeriesDataset, tau_bar: int, lag0_at_target: bool = False):
    """Cut ``X`` into ``c = T - tau_hat`` windows of length ``tau_hat = tau_bar + 1``.

    Window ``p`` (1-based) covers source times ``p .. p + tau_hat - 1`` and is
    paired with target time ``tau_hat + p``, so only times ``1 .. T-1`` enter a
    window. With ``lag0_at_target`` every window is shifted one step later:
    its last column is the target time itself, so lag 0 reads simultaneous
    values (the self-loop mask keeps a variable from predicting itself).
    """
    tau_bar = int(tau_bar)
    if tau_bar < 1:
        raise ConfigError(f"tau_bar must be >= 1, got {tau_bar}")
    if X.T < min_length(tau_bar):
        raise ConfigError(
            f"series too short: T={X.T} but tau_bar={tau_bar} needs T >= {min_length(tau_bar)}"
        )
    tau_hat = tau_bar + 1
    c = X.T - tau_hat
    shift = 1 if lag0_at_target else 0
    starts = np.arange(c) + shift
    idx = starts[:, None] + np.arange(tau_hat)[None, :]  # (c, tau_hat), 0-based times
    windows = np.ascontiguousarray(np.transpose(X.values[:, idx], (0, 2, 1)))
    targets = X.values[:, tau_hat:].copy()
    return WindowTensor(
        windows=windows,
        targets=targets,
        tau_hat=tau_hat,
        origin_offsets=starts + 1,
        lag0_at_target=lag0_at_target,
    )
