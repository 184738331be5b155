"""Reading and writing datasets, edge matrices, checkpoints and reports.

Structured files are JSON with a ``format_version`` field, a fixed key order
and shortest round-trip float formatting, so equal inputs give byte-identical
files. Variable indices in edge files are 1-based.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from stic.datagen import GroundTruth
from stic.errors import DataError, IoError, ParseError
from stic.extract import BinaryCausalMatrix
from stic.model import CausalScoreTensor, ModelParams
from stic.windowing import TimeSeriesDataset

FORMAT_VERSION = 1


def _open(path, mode, newline=None):
    path = os.fspath(path)
    try:
        if "w" in mode:
            parent = os.path.dirname(path)
            if parent:
                os.makedirs(parent, exist_ok=True)
        return open(path, mode, newline=newline, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path!r}: {exc.strerror or exc}") from exc


def _write_text(path, text):
    with _open(path, "w") as fh:
        try:
            fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {path!r}: {exc}") from exc


def _read_text(path):
    with _open(path, "r") as fh:
        try:
            return fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise IoError(f"cannot read {path!r}: {exc}") from exc


def _plain(value):
    """Convert numpy scalars and arrays to JSON-native values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def dumps(doc, rows_key=None):
    """Deterministic JSON text; the list under ``rows_key`` gets one item per line."""
    doc = _plain(doc)
    if rows_key is None or rows_key not in doc:
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    rows = doc.pop(rows_key)
    head = json.dumps(doc, indent=2, allow_nan=False)
    body = ",\n".join("    " + json.dumps(r, allow_nan=False) for r in rows)
    tail = f'  "{rows_key}": [\n{body}\n  ]' if rows else f'  "{rows_key}": []'
    if doc:
        return head[:-2] + ",\n" + tail + "\n}\n"
    return "{\n" + tail + "\n}\n"


def save_json(doc, path, rows_key=None):
    try:
        text = dumps(doc, rows_key)
    except ValueError as exc:
        raise IoError(f"cannot serialise {path!r}: {exc}") from exc
    _write_text(path, text)


def load_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from None


# -- CSV -------------------------------------------------------------------

def load_csv(path) -> TimeSeriesDataset:
    """Rows are time steps, columns variables; the first row holds the names."""
    with _open(path, "r", newline="") as fh:
        try:
            rows = list(csv.reader(fh))
        except (csv.Error, OSError, UnicodeDecodeError) as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty file, expected a header row", line=1)
    names = [n.strip() for n in rows[0]]
    if len(names) < 2:
        raise DataError(f"{path}: need at least 2 columns, found {len(names)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(names):
            raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {len(names)}", line=lineno)
        values = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {lineno}, column {col}: not a finite number: {cell!r}",
                                 line=lineno, column=col)
            values.append(v)
        data.append(values)
    if not data:
        raise DataError(f"{path}: no data rows")
    return TimeSeriesDataset(np.array(data).T, names)


def save_csv(X: TimeSeriesDataset, path):
    lines = [",".join(X.variable_names)]
    lines.extend(",".join(repr(float(v)) for v in row) for row in X.values.T)
    _write_text(path, "\n".join(lines) + "\n")


# -- edge matrices ---------------------------------------------------------

def _entries(mask, values=None):
    out = []
    for i, j, tau in np.argwhere(mask):
        item = [int(i) + 1, int(j) + 1, int(tau)]
        item.append(True if values is None else float(values[i, j, tau]))
        out.append(item)
    return out


def save_adjacency(M, path):
    """Write a :class:`BinaryCausalMatrix` (true entries only) or a full :class:`CausalScoreTensor`."""
    if isinstance(M, BinaryCausalMatrix):
        doc = {
            "format_version": FORMAT_VERSION, "kind": "binary", "d": M.d, "lag_depth": M.lag_depth,
            "threshold": M.threshold, "variable_names": M.variable_names,
            "entries": _entries(M.edges),
        }
    elif isinstance(M, CausalScoreTensor):
        full = np.ones(M.scores.shape, dtype=bool)
        doc = {
            "format_version": FORMAT_VERSION, "kind": "scores", "d": M.d, "lag_depth": M.lag_depth,
            "variable_names": M.variable_names,
            # entries carry the score; the signed effect sits at the same position
            "effects": [e[3] for e in _entries(full, M.effects)],
            "entries": _entries(full, M.scores),
        }
    else:
        raise TypeError(f"cannot save {type(M).__name__} as an adjacency file")
    save_json(doc, path, rows_key="entries")


def _check_header(doc, path, kinds):
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{path}: missing or unsupported format_version")
    if doc.get("kind") not in kinds:
        raise ParseError(f"{path}: expected kind in {kinds}, got {doc.get('kind')!r}")
    for key in ("d", "lag_depth", "entries"):
        if key not in doc:
            raise ParseError(f"{path}: missing field {key!r}")


def _fill(doc, path, dtype):
    d, depth = int(doc["d"]), int(doc["lag_depth"])
    arr = np.zeros((d, d, depth), dtype=dtype)
    for n, entry in enumerate(doc["entries"]):
        try:
            i, j, tau, value = entry
            if min(i, j) < 1 or tau < 0:
                raise IndexError
            arr[i - 1, j - 1, tau] = value
        except (ValueError, TypeError, IndexError):
            raise ParseError(f"{path}: bad entry #{n + 1}: {entry!r}") from None
    return arr


def load_adjacency(path):
    """Inverse of :func:`save_adjacency`; truth files load as a :class:`BinaryCausalMatrix`."""
    doc = load_json(path)
    _check_header(doc, path, ("binary", "scores", "truth"))
    names = doc.get("variable_names")
    if doc["kind"] == "scores":
        scores = _fill(doc, path, np.float64)
        effects = scores.copy()
        if "effects" in doc:
            flat = np.asarray(doc["effects"], dtype=np.float64)
            if flat.size != scores.size:
                raise ParseError(f"{path}: effects list has {flat.size} values, expected {scores.size}")
            # entries were written in row-major order over the full tensor
            effects = flat.reshape(scores.shape)
        return CausalScoreTensor(scores, effects, names)
    edges = _fill(doc, path, bool)
    try:
        return BinaryCausalMatrix(edges, doc.get("threshold"), names)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_ground_truth(truth: GroundTruth, path):
    doc = {
        "format_version": FORMAT_VERSION, "kind": "truth", "d": truth.d,
        "lag_depth": truth.adjacency.shape[2], "mechanism": truth.mechanism, "noise": truth.noise,
        "scale": truth.scale, "retries": truth.retries,
        "intra_slice_order": [int(i) + 1 for i in truth.intra_slice_order],
        "variable_names": truth.variable_names,
        "entries": _entries(truth.adjacency, truth.weights),
    }
    save_json(doc, path, rows_key="entries")


def load_ground_truth(path) -> GroundTruth:
    doc = load_json(path)
    _check_header(doc, path, ("truth",))
    weights = _fill(doc, path, np.float64)
    order = np.array(doc.get("intra_slice_order", []), dtype=int) - 1
    return GroundTruth(
        adjacency=weights != 0.0, weights=weights, intra_slice_order=order,
        mechanism=doc.get("mechanism", "linear"), noise=doc.get("noise", "gaussian"),
        scale=float(doc.get("scale", 1.0)), retries=int(doc.get("retries", 0)),
        variable_names=doc.get("variable_names"),
    )


def _dot_id(name):
    return '"' + str(name).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(M: BinaryCausalMatrix, path):
    """Graphviz digraph with one node per variable and one ``lag=tau`` edge per entry."""
    names = M.variable_names or [f"X{i + 1}" for i in range(M.d)]
    lines = ["digraph window_causal_graph {"]
    lines += [f"  {_dot_id(n)};" for n in names]
    for i, j, tau in M.edge_list():
        lines.append(f'  {_dot_id(names[i])} -> {_dot_id(names[j])} [label="lag={tau}"];')
    lines.append("}")
    _write_text(path, "\n".join(lines) + "\n")


# -- checkpoints and reports ----------------------------------------------

def save_checkpoint(params: ModelParams, path):
    arrays = {
        name: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()}
        for name, v in params.to_dict().items()
    }
    doc = {
        "format_version": FORMAT_VERSION, "kind": "checkpoint",
        "d": params.d, "tau_hat": params.tau_hat, "n_kernels": params.n_kernels,
        "score_activation": params.score_activation, "rng_seed": params.rng_seed,
        "arrays": arrays,
    }
    save_json(doc, path)


def load_checkpoint(path) -> ModelParams:
    doc = load_json(path)
    if not isinstance(doc, dict) or doc.get("kind") != "checkpoint" or doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{path}: not a checkpoint file")
    try:
        arr = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["arrays"].items()}
        n = int(doc["n_kernels"])
        return ModelParams(
            kernel_t=arr["kernel_t"],
            kernels_m=[arr[f"kernel_m.{i}"] for i in range(n)],
            prelu_slopes=np.array([float(arr[f"slope_m.{i}"]) for i in range(n)]),
            fnn_w1=arr["fnn.w1"], fnn_b1=arr["fnn.b1"], fnn_slope=float(arr["fnn.slope"]),
            fnn_w2=arr["fnn.w2"], fnn_b2=arr["fnn.b2"],
            score_activation=doc.get("score_activation", "tanh"), rng_seed=doc.get("rng_seed"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"{path}: malformed checkpoint ({exc})") from None


def save_train_report(report, path):
    doc = {"format_version": FORMAT_VERSION, "kind": "train_report"}
    doc.update(report.to_dict())
    save_json(doc, path)
