"""Exception hierarchy shared by every stic module."""


class SticError(Exception):
    """Base class for all errors raised by stic."""

    exit_code = 1


class ConfigError(SticError, ValueError):
    exit_code = 2


class ShapeError(SticError, ValueError):
    exit_code = 2


class DataError(SticError, ValueError):
    exit_code = 3


class ParseError(DataError):
    """Malformed input file; carries the offending line (and column when known)."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class DivergenceError(SticError, ArithmeticError):
    """Training loss became non-finite."""

    exit_code = 4

    def __init__(self, message, epoch, last_finite_loss):
        super().__init__(message)
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss


class IoError(SticError, OSError):
    exit_code = 5


class StabilityError(SticError, ArithmeticError):
    exit_code = 6


class NumericalError(SticError, ArithmeticError):
    """A recorded op produced NaN or Inf."""

    exit_code = 4

    def __init__(self, message, op_index=None):
        super().__init__(message)
        self.op_index = op_index


class OracleError(SticError, RuntimeError):
    """The function handed to a gradient check is not deterministic."""
