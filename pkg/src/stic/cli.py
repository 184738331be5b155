"""Command-line interface: ``stic generate | train | evaluate | sweep``.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags (flags win). Outputs go under ``--out``, or
under ``$STIC_OUTPUT_ROOT/<command>`` when no directory is given.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from stic import __version__
from stic import io as sio
from stic.datagen import GeneratorSpec, generate
from stic.errors import ConfigError, SticError
from stic.extract import BinaryCausalMatrix, binarize, evaluate
from stic.model import CausalScoreTensor
from stic.trainer import TrainConfig, train

OUTPUT_ROOT_ENV = "STIC_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "stic-runs"
MODES = ("generate", "train", "evaluate", "sweep")

log = logging.getLogger("stic")


@dataclass
class ExperimentConfig:
    mode: str = "train"
    # generator
    d: int = 5
    T: int = 1000
    seed: int = 0
    mechanism: str = "linear"
    noise: str = "gaussian"
    edge_probability: float = 0.5
    tau_tilde: int = None
    noise_scale: float = 1.0
    burn_in: int = 200
    stabilization: str = "rescale"
    # training
    lr: float = 1e-5
    epochs: int = 5000
    patience: int = 200
    tau_bar: int = None
    n_kernels: int = 1
    momentum: float = 0.0
    score_activation: str = "tanh"
    threshold: float = 0.3
    # sweep
    seeds: list = field(default_factory=lambda: [0])
    d_list: list = field(default_factory=lambda: [5])
    T_list: list = field(default_factory=lambda: [1000])
    workers: int = 1
    # paths
    out: str = None
    data: str = None
    truth: str = None
    pred: str = None

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.mode == "sweep":
            if not self.seeds:
                raise ConfigError("sweep needs a non-empty seed list")
            if not self.d_list or not self.T_list:
                raise ConfigError("sweep needs non-empty d and T lists")
            if self.workers < 1:
                raise ConfigError("workers must be >= 1")
        if self.mode == "train" and not self.data:
            raise ConfigError("train needs --data")
        if self.mode == "evaluate" and not (self.pred and self.truth):
            raise ConfigError("evaluate needs --pred and --truth")

    def generator_spec(self, d=None, T=None, seed=None):
        return GeneratorSpec(
            d=self.d if d is None else d, T=self.T if T is None else T,
            mechanism=self.mechanism, noise=self.noise, edge_probability=self.edge_probability,
            tau_tilde=self.tau_tilde, rng_seed=self.seed if seed is None else seed,
            burn_in=self.burn_in, noise_scale=self.noise_scale, stabilization=self.stabilization,
        )

    def train_config(self, seed=None):
        return TrainConfig(
            learning_rate=self.lr, max_epochs=self.epochs, patience=self.patience,
            tau_bar=self.tau_bar, n_kernels=self.n_kernels, momentum=self.momentum,
            score_activation=self.score_activation, rng_seed=self.seed if seed is None else seed,
        )

    def output_dir(self):
        if self.out:
            return self.out
        return os.path.join(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT), self.mode)


CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def load_config(path):
    doc = sio.load_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return doc


def resolve_config(mode, args):
    """Defaults, then the config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    flags = {k: v for k, v in vars(args).items() if k in CONFIG_KEYS and v is not None}
    values.update(flags)
    values["mode"] = mode
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


# -- shared helpers --------------------------------------------------------

def align_lags(M: BinaryCausalMatrix, depth):
    """Truncate to ``depth`` lag slices, or pad with absent edges when shallower."""
    if M.lag_depth >= depth:
        return BinaryCausalMatrix(M.edges[:, :, :depth], M.threshold, M.variable_names)
    pad = np.zeros((M.d, M.d, depth - M.lag_depth), dtype=bool)
    return BinaryCausalMatrix(np.concatenate([M.edges, pad], axis=2), M.threshold, M.variable_names)


def all_ones_f1(truth: BinaryCausalMatrix):
    """F1 of predicting every admissible edge."""
    ones = np.ones(truth.edges.shape, dtype=bool)
    d = truth.d
    ones[np.arange(d), np.arange(d), 0] = False
    return evaluate(BinaryCausalMatrix(ones), truth).f1


def score_run(scores, truth_edges, threshold):
    truth = BinaryCausalMatrix(truth_edges)
    pred = align_lags(binarize(scores, threshold), truth.lag_depth)
    return pred, evaluate(pred, truth)


# -- commands --------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig):
    spec = cfg.generator_spec()
    X, truth = generate(spec)
    out = cfg.output_dir()
    data_path = os.path.join(out, "data.csv")
    truth_path = os.path.join(out, "truth.json")
    sio.save_csv(X, data_path)
    sio.save_ground_truth(truth, truth_path)
    sio.save_json(_snapshot(cfg), os.path.join(out, "config.json"))
    print(f"wrote {data_path} (d={X.d}, T={X.T}) and {truth_path} ({int(truth.adjacency.sum())} edges)")
    return {"data": data_path, "truth": truth_path}


def cmd_train(cfg: ExperimentConfig):
    X = sio.load_csv(cfg.data)
    tcfg = cfg.train_config()
    scores, params, report = train(X, tcfg)
    pred = binarize(scores, cfg.threshold)
    out = cfg.output_dir()
    paths = {
        "config": os.path.join(out, "config.json"),
        "scores": os.path.join(out, "scores.json"),
        "binary": os.path.join(out, "binary.json"),
        "graph": os.path.join(out, "graph.dot"),
        "report": os.path.join(out, "train_report.json"),
        "checkpoint": os.path.join(out, "checkpoint.json"),
    }
    sio.save_json(_snapshot(cfg), paths["config"])
    sio.save_adjacency(scores, paths["scores"])
    sio.save_adjacency(pred, paths["binary"])
    sio.export_dot(pred, paths["graph"])
    sio.save_train_report(report, paths["report"])
    sio.save_checkpoint(params, paths["checkpoint"])
    print(f"trained {report.epochs_run} epochs ({report.stop_reason}), final loss {report.final_loss:.6g}, "
          f"{len(pred.edge_list())} edges at p={cfg.threshold}")
    if cfg.truth:
        truth = sio.load_ground_truth(cfg.truth)
        _, metrics = score_run(scores, truth.adjacency, cfg.threshold)
        paths["metrics"] = os.path.join(out, "metrics.json")
        sio.save_json(metrics.to_dict(), paths["metrics"])
        _print_metrics(metrics)
    return paths


def cmd_evaluate(cfg: ExperimentConfig):
    pred = sio.load_adjacency(cfg.pred)
    truth = sio.load_adjacency(cfg.truth)
    if isinstance(pred, CausalScoreTensor):
        pred = binarize(pred, cfg.threshold)
    if pred.d != truth.d:
        raise ConfigError(f"prediction has {pred.d} variables, truth has {truth.d}")
    metrics = evaluate(align_lags(pred, truth.lag_depth), truth)
    path = os.path.join(cfg.output_dir(), "metrics.json")
    sio.save_json(metrics.to_dict(), path)
    _print_metrics(metrics)
    return metrics


def _sweep_one(job):
    cfg, d, T, seed = job
    record = {"d": d, "T": T, "seed": seed}
    try:
        X, truth = generate(cfg.generator_spec(d=d, T=T, seed=seed))
        scores, _, report = train(X, cfg.train_config(seed=seed))
        _, m = score_run(scores, truth.adjacency, cfg.threshold)
    except SticError as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return record
    record.update(
        status="ok", f1=m.f1, precision=m.precision, recall=m.recall,
        true_positives=m.true_positives, false_positives=m.false_positives,
        false_negatives=m.false_negatives,
        all_ones_f1=all_ones_f1(BinaryCausalMatrix(truth.adjacency)),
        epochs_run=report.epochs_run, stop_reason=report.stop_reason, final_loss=report.final_loss,
    )
    return record


def aggregate(records):
    """Per-(d, T) mean and population variance of F1 and precision over successful runs."""
    groups = {}
    for r in records:
        groups.setdefault((r["d"], r["T"]), []).append(r)
    rows = []
    for (d, T), runs in groups.items():
        ok = [r for r in runs if r["status"] == "ok"]
        row = {"d": d, "T": T, "n_runs": len(runs), "n_ok": len(ok), "partial": len(ok) < len(runs)}
        for key in ("f1", "precision"):
            vals = np.array([r[key] for r in ok], dtype=np.float64)
            row[f"{key}_mean"] = float(vals.mean()) if len(vals) else None
            row[f"{key}_var"] = float(vals.var()) if len(vals) else None
        rows.append(row)
    return rows


def cmd_sweep(cfg: ExperimentConfig):
    jobs = [(cfg, d, T, s) for d in cfg.d_list for T in cfg.T_list for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            records = list(pool.map(_sweep_one, jobs))
    else:
        records = [_sweep_one(j) for j in jobs]
    rows = aggregate(records)
    summary = {
        "format_version": sio.FORMAT_VERSION, "kind": "sweep_summary",
        "config": _snapshot(cfg), "partial": any(r["partial"] for r in rows),
        "aggregates": rows, "runs": records,
    }
    path = os.path.join(cfg.output_dir(), "summary.json")
    sio.save_json(summary, path)
    for r in rows:
        f1 = "n/a" if r["f1_mean"] is None else f"{r['f1_mean']:.3f} (var {r['f1_var']:.4f})"
        pr = "n/a" if r["precision_mean"] is None else f"{r['precision_mean']:.3f} (var {r['precision_var']:.4f})"
        flag = "  PARTIAL" if r["partial"] else ""
        print(f"d={r['d']:<3} T={r['T']:<6} runs={r['n_ok']}/{r['n_runs']}  F1 {f1}  precision {pr}{flag}")
    print(f"wrote {path}")
    return summary


def _snapshot(cfg):
    snap = asdict(cfg)
    snap["version"] = __version__
    return snap


def _print_metrics(m):
    print(f"precision {m.precision:.4f}  recall {m.recall:.4f}  F1 {m.f1:.4f}  "
          f"(tp={m.true_positives} fp={m.false_positives} fn={m.false_negatives})")


# -- argument parsing ------------------------------------------------------

def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="stic", description="Window causal graph discovery from time series.")
    parser.add_argument("--version", action="version", version=f"stic {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of settings; flags override it")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<command>)")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    def gen_flags(p, lists=False):
        if lists:
            p.add_argument("--seed", dest="seeds", type=_int_list, help="seed list, e.g. 0,1,2")
            p.add_argument("--d", dest="d_list", type=_int_list, help="variable counts, e.g. 5,10")
            p.add_argument("--T", dest="T_list", type=_int_list, help="series lengths, e.g. 100,1000")
        else:
            p.add_argument("--seed", type=int)
            p.add_argument("--d", type=int)
            p.add_argument("--T", type=int)
        p.add_argument("--mechanism", choices=("linear", "cosine"))
        p.add_argument("--noise", choices=("gaussian", "uniform"))

    def train_flags(p):
        p.add_argument("--tau-bar", dest="tau_bar", type=int, help="maximum lag searched (default round(0.4 d))")
        p.add_argument("--threshold", type=float, help="edge threshold p (default 0.3)")
        p.add_argument("--lr", type=float, help="learning rate (default 1e-5)")
        p.add_argument("--epochs", type=int, help="maximum epochs (default 5000)")
        p.add_argument("--patience", type=int, help="plateau patience in epochs (default 200)")

    p = sub.add_parser("generate", help="simulate a dataset and its ground truth")
    common(p)
    gen_flags(p)

    p = sub.add_parser("train", help="fit the model to a CSV dataset")
    common(p)
    p.add_argument("--data", help="CSV dataset (rows are time steps)")
    p.add_argument("--truth", help="optional truth file; writes metrics.json")
    p.add_argument("--seed", type=int)
    train_flags(p)

    p = sub.add_parser("evaluate", help="score a predicted matrix against a truth file")
    common(p)
    p.add_argument("--pred", help="binary or score file from train")
    p.add_argument("--truth", help="truth or binary file")
    p.add_argument("--threshold", type=float, help="threshold applied when --pred holds scores")

    p = sub.add_parser("sweep", help="generate, train and evaluate over a (d, T, seed) grid")
    common(p)
    gen_flags(p, lists=True)
    train_flags(p)
    p.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
    return parser


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        COMMANDS[args.command](cfg)
    except SticError as exc:
        print(f"stic {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
