"""Reverse-mode gradients over a fixed, recorded computation graph.

A :class:`Tape` records a straight-line program of numpy primitives. Once
built it can be replayed after parameters change and differentiated with
:func:`forward_and_backward`. It is deliberately not a general autodiff
framework: there is no control flow, no higher-order derivative and every
node output is kept alive for the backward pass.

PReLU uses the positive branch at exactly zero (``prelu(0) = 0`` with unit
derivative), so a finite-difference probe straddling zero disagrees with the
analytic gradient. :func:`finite_difference_check` detects this by comparing
PReLU sign patterns and excludes those coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stic import backend
from stic.errors import NumericalError, OracleError, ShapeError


class Var:
    """Handle to one node of a :class:`Tape`."""

    __slots__ = ("tape", "index")

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.values[self.index]

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        kind = self.tape.kinds[self.index]
        return f"Var(#{self.index} {kind} shape={self.shape})"


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _prelu(x, a):
    return np.where(x >= 0.0, x, a * x)


def _sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _stack_window_args(vals):
    windows, targets, kernels, slopes, effects = vals
    return (
        np.ascontiguousarray(windows),
        np.ascontiguousarray(targets),
        np.ascontiguousarray(kernels),
        np.ascontiguousarray(slopes),
        np.ascontiguousarray(effects),
    )


# forward rules: (input values, attrs) -> output value
_FORWARD = {
    "add": lambda v, at: v[0] + v[1],
    "sub": lambda v, at: v[0] - v[1],
    "mul": lambda v, at: v[0] * v[1],
    "matvec": lambda v, at: v[0] @ v[1],
    "affine": lambda v, at: v[0] @ v[1] + v[2],
    "matmul": lambda v, at: v[0] @ v[1],
    "sigmoid": lambda v, at: _sigmoid(v[0]),
    "tanh": lambda v, at: np.tanh(v[0]),
    "prelu": lambda v, at: _prelu(v[0], v[1]),
    "sum": lambda v, at: np.asarray(np.sum(v[0])),
    "mean_pool": lambda v, at: np.mean(v[0], axis=at),
    "reshape": lambda v, at: np.reshape(v[0], at),
    "transpose": lambda v, at: np.transpose(v[0], at),
    "take": lambda v, at: np.take(v[0], at[0], axis=at[1]),
    "stack": lambda v, at: np.stack(v),
}


def _window_loss_forward(vals, attrs):
    # the compiled kernel is float64-only
    name = "python" if vals[0].dtype != np.float64 else attrs
    out = backend.get(name).window_loss(*_stack_window_args(vals))
    return np.asarray(out[0]), out[1:]


def _backward(kind, g, vals, out, attrs, cache):
    """Vector-Jacobian product; returns one gradient (or None) per input."""
    if kind == "add":
        return _unbroadcast(g, np.shape(vals[0])), _unbroadcast(g, np.shape(vals[1]))
    if kind == "sub":
        return _unbroadcast(g, np.shape(vals[0])), _unbroadcast(-g, np.shape(vals[1]))
    if kind == "mul":
        a, b = vals
        return _unbroadcast(g * b, np.shape(a)), _unbroadcast(g * a, np.shape(b))
    if kind == "matvec":
        A, x = vals
        return np.outer(g, x), A.T @ g
    if kind == "affine":
        A, x, _ = vals
        return np.outer(g, x), A.T @ g, g
    if kind == "matmul":
        A, B = vals
        return g @ B.T, A.T @ g
    if kind == "sigmoid":
        return (g * out * (1.0 - out),)
    if kind == "tanh":
        return (g * (1.0 - out * out),)
    if kind == "prelu":
        x, a = vals
        neg = x < 0.0
        return np.where(neg, a * g, g), np.asarray(np.sum(g[neg] * x[neg]))
    if kind == "sum":
        return (np.full(np.shape(vals[0]), float(g)),)
    if kind == "mean_pool":
        x = vals[0]
        n = x.shape[attrs]
        return (np.broadcast_to(np.expand_dims(g, attrs) / n, x.shape).copy(),)
    if kind == "reshape":
        return (np.reshape(g, np.shape(vals[0])),)
    if kind == "transpose":
        return (np.transpose(g, np.argsort(attrs)),)
    if kind == "take":
        idx, axis = attrs
        grad = np.zeros(np.shape(vals[0]))
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (grad,)
    if kind == "stack":
        return tuple(g[k] for k in range(len(vals)))
    if kind == "window_loss":
        gk, gs, ge = cache
        s = float(g)
        return None, None, s * gk, s * gs, s * ge
    raise NotImplementedError(kind)


class Tape:
    """Straight-line recording of primitive ops ending in one output node."""

    def __init__(self, dtype=np.float64):
        self.dtype = dtype
        self.values = []
        self.kinds = []
        self.inputs = []
        self.attrs = []
        self.cache = []
        self.params = {}
        self._stale = None  # leaves changed since the last replay; None = everything

    # -- recording -------------------------------------------------------
    def _check(self, index, value):
        if not np.isfinite(value).all():
            raise NumericalError(
                f"op #{index} ({self.kinds[index]}) produced a non-finite value",
                op_index=index,
            )

    def _leaf(self, kind, value):
        value = np.array(value, dtype=self.dtype)
        index = len(self.values)
        self.values.append(value)
        self.kinds.append(kind)
        self.inputs.append(())
        self.attrs.append(None)
        self.cache.append(None)
        self._check(index, value)
        return Var(self, index)

    def _op(self, kind, args, attrs=None):
        for a in args:
            if a.tape is not self:
                raise ValueError("cannot mix nodes from different tapes")
        index = len(self.values)
        self.kinds.append(kind)
        self.inputs.append(tuple(a.index for a in args))
        self.attrs.append(attrs)
        self.cache.append(None)
        self.values.append(None)
        try:
            self.values[index] = self._eval(index)
        except ValueError as exc:
            raise ShapeError(f"op #{index} ({kind}): {exc}") from exc
        self._check(index, self.values[index])
        return Var(self, index)

    def _eval(self, index):
        kind = self.kinds[index]
        vals = [self.values[i] for i in self.inputs[index]]
        # overflow shows up as a non-finite value and is reported by _check
        with np.errstate(over="ignore", invalid="ignore"):
            if kind == "window_loss":
                out, self.cache[index] = _window_loss_forward(vals, self.attrs[index])
                return out
            return _FORWARD[kind](vals, self.attrs[index])

    def param(self, name, value):
        """Register a trainable leaf called ``name``."""
        if name in self.params:
            raise ValueError(f"parameter {name!r} registered twice")
        var = self._leaf("param", value)
        self.params[name] = var.index
        return var

    def const(self, value):
        return self._leaf("const", value)

    def add(self, a, b):
        return self._op("add", (a, b))

    def sub(self, a, b):
        return self._op("sub", (a, b))

    def mul(self, a, b):
        return self._op("mul", (a, b))

    def matvec(self, A, x):
        return self._op("matvec", (A, x))

    def affine(self, A, x, b):
        return self._op("affine", (A, x, b))

    def matmul(self, A, B):
        return self._op("matmul", (A, B))

    def sigmoid(self, x):
        return self._op("sigmoid", (x,))

    def tanh(self, x):
        return self._op("tanh", (x,))

    def prelu(self, x, slope):
        return self._op("prelu", (x, slope))

    def sum(self, x):
        return self._op("sum", (x,))

    def mean_pool(self, x, axis=0):
        return self._op("mean_pool", (x,), axis)

    def reshape(self, x, shape):
        return self._op("reshape", (x,), tuple(shape))

    def transpose(self, x, axes):
        return self._op("transpose", (x,), tuple(axes))

    def take(self, x, indices, axis):
        return self._op("take", (x,), (np.asarray(indices), axis))

    def stack(self, xs):
        return self._op("stack", tuple(xs))

    def window_loss(self, windows, targets, kernels, slopes, effects, kernel_backend=None):
        """Fused mechanism block, selected column summation and squared error.

        ``kernel_backend`` pins "python" or "compiled"; ``None`` uses the
        import-time default.
        """
        return self._op("window_loss", (windows, targets, kernels, slopes, effects), kernel_backend)

    # -- evaluation ------------------------------------------------------
    @property
    def output(self):
        return Var(self, len(self.values) - 1)

    @property
    def value(self):
        """Scalar value of the last recorded node."""
        v = self.values[-1]
        return v[()] if self.dtype != np.float64 else float(v)

    def get_param(self, name):
        return self.values[self.params[name]]

    def set_params(self, params):
        for name, value in params.items():
            index = self.params[name]
            value = np.array(value, dtype=self.dtype)
            if value.shape != self.values[index].shape:
                raise ShapeError(
                    f"parameter {name!r}: expected shape {self.values[index].shape}, got {value.shape}"
                )
            self._check(index, value)
            self.values[index] = value
            if self._stale is not None:
                self._stale.add(index)

    def with_precision(self, dtype):
        """Copy of this tape whose leaves are cast to ``dtype``, replayed."""
        other = Tape(dtype)
        other.kinds = list(self.kinds)
        other.inputs = list(self.inputs)
        other.attrs = list(self.attrs)
        other.cache = [None] * len(self.kinds)
        other.params = dict(self.params)
        other.values = [
            np.array(v, dtype=dtype) if k in ("param", "const") else None
            for k, v in zip(self.kinds, self.values)
        ]
        other._stale = None
        for name in ("effects_node",):
            if hasattr(self, name):
                setattr(other, name, getattr(self, name))
        other.replay()
        return other

    def replay(self):
        """Recompute ops from the current leaf values; returns the output.

        Only nodes downstream of parameters changed through
        :meth:`set_params` since the previous replay are recomputed.
        """
        stale = self._stale
        dirty = [False] * len(self.kinds)
        for index, kind in enumerate(self.kinds):
            if kind in ("param", "const"):
                dirty[index] = stale is None or index in stale
                continue
            if stale is not None and not any(dirty[i] for i in self.inputs[index]):
                continue
            dirty[index] = True
            self.values[index] = self._eval(index)
            self._check(index, self.values[index])
        self._stale = set()
        return self.value

    def backward(self):
        """Gradients of the (scalar) output with respect to every parameter."""
        n = len(self.values)
        adj = [None] * n
        adj[n - 1] = np.ones(np.shape(self.values[-1]))
        for index in range(n - 1, -1, -1):
            g = adj[index]
            kind = self.kinds[index]
            if g is None or kind in ("param", "const"):
                continue
            ins = self.inputs[index]
            vals = [self.values[i] for i in ins]
            grads = _backward(kind, g, vals, self.values[index], self.attrs[index], self.cache[index])
            for i, gi in zip(ins, grads):
                if gi is None or self.kinds[i] == "const":
                    continue
                adj[i] = gi if adj[i] is None else adj[i] + gi
        return {
            name: (np.zeros_like(self.values[i]) if adj[i] is None else np.array(adj[i], dtype=np.float64))
            for name, i in self.params.items()
        }

    def kink_signature(self):
        """Sign pattern of every PReLU input on the tape, as bytes."""
        parts = []
        for index, kind in enumerate(self.kinds):
            if kind == "prelu":
                parts.append(np.sign(self.values[self.inputs[index][0]]).astype(np.int8).tobytes())
            elif kind == "window_loss":
                windows, _, kernels, slopes, _ = (self.values[i] for i in self.inputs[index])
                for z in backend.get("python").mechanism_preactivations(windows, kernels, slopes):
                    parts.append(np.sign(z).astype(np.int8).tobytes())
        return b"|".join(parts)


def forward_and_backward(tape, params=None):
    """Return ``(loss, grads)`` for ``tape``, optionally after loading ``params``.

    ``params`` maps registered parameter names to new values; when given the
    tape is replayed before differentiating.
    """
    if params is not None:
        tape.set_params(params)
        tape.replay()
    return tape.value, tape.backward()


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    tol: float
    checked: int
    excluded: list = field(default_factory=list)
    worst: tuple = None

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"gradcheck {verdict}: max_rel_err={self.max_rel_err:.3e} (tol {self.tol:g}), "
            f"{self.checked} coords checked, {len(self.excluded)} excluded at PReLU kinks"
        )


def finite_difference_check(loss_fn, params, h=1e-6, tol=1e-4, precision=np.longdouble):
    """Compare tape gradients with central differences.

    ``loss_fn(params)`` must build and return a :class:`Tape` whose output is
    the scalar loss. Coordinates whose ``±h`` probe changes any PReLU sign
    pattern are skipped and listed in ``report.excluded``.

    Analytic gradients are float64; the difference quotients replay the same
    tape in ``precision`` (extended by default) so that rounding in
    ``f(x+h) - f(x-h)`` does not swamp small gradient components. Pass
    ``precision=np.float64`` for a plain double-precision probe.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    tape = loss_fn(params)
    again = loss_fn(params)
    if tape.value != again.value:
        raise OracleError(f"loss_fn is not deterministic: {tape.value!r} != {again.value!r}")

    _, grads = forward_and_backward(tape)
    tape = tape.with_precision(precision)
    base_sig = tape.kink_signature()
    worst = None
    max_err = 0.0
    checked = 0
    excluded = []
    for name in tape.params:
        values = tape.get_param(name).copy()
        for idx in np.ndindex(values.shape):
            orig = values[idx]
            values[idx] = orig + h
            tape.set_params({name: values})
            f_plus = tape.replay()
            crossed = tape.kink_signature() != base_sig
            values[idx] = orig - h
            tape.set_params({name: values})
            f_minus = tape.replay()
            crossed = crossed or tape.kink_signature() != base_sig
            values[idx] = orig
            if crossed:
                excluded.append((name, idx))
                continue
            analytic = grads[name][idx]
            numeric = float((f_plus - f_minus) / (2 * precision(h)))
            err = abs(analytic - numeric) / (abs(analytic) + 1e-12)
            checked += 1
            if worst is None or err > max_err:
                max_err = err
                worst = (name, idx, float(analytic), numeric)
        tape.set_params({name: values})
    return GradCheckReport(
        max_rel_err=max_err, passed=max_err <= tol, tol=tol, checked=checked,
        excluded=excluded, worst=worst,
    )
