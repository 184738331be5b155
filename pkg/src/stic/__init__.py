"""Window causal graph discovery from multivariate time series."""

from stic.errors import (
    ConfigError, DataError, DivergenceError, IoError, NumericalError, OracleError,
    ParseError, ShapeError, StabilityError, SticError,
)
from stic.windowing import TimeSeriesDataset, WindowTensor, build_window_representation, standardize
from stic.model import CausalScoreTensor, ModelParams

__version__ = "0.1.0"
