"""Command-line entry point: ``creditgcn {gen,train,eval,sweep,probe}``.

Settings resolve in order: built-in defaults, then a flat JSON ``--config``
file, then ``CREDITGCN_SEED`` (seed only), then explicit flags. Every CSV
written gets a ``.json`` sidecar echoing the resolved configuration.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import SyntheticSpec, gen_synthetic, load_csv, normalize, write_csv
from .errors import (ConsistencyError, DataError, NumericError, SchemaError, ShapeError,
                     TrainingError, ValidationError)
from .evaluation import METRICS, oversmoothing_probe, run_experiment, sweep_dm, sweep_to_csv
from .graph import build_knn_graph
from .model import ModelConfig, train
from .trees import extract_all

SEED_ENV = "CREDITGCN_SEED"


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 0  # 0: one per available core
    data: str | None = None
    label_column: str = "label"
    out: str | None = None
    # gen
    n: int = 3000
    ratio: float = 5.0
    feature_dim: int = 8
    flip: float = 0.0
    separation: float = 2.0
    neighbors: int = 3
    # model
    model: str = "hybrid"
    D: int = 3
    m: int = 3
    hidden: str = "16"
    global_layers: int = 2
    activation: str = "relu"
    pool: str = "max"
    lr: float = 0.05
    epochs: int = 200
    batch: int | None = None
    imbalance: str = "class_weights"
    # eval / sweep / probe
    repeats: int = 10
    folds: int = 3
    method: str = "model"
    D_values: str = "1,2,3,4"
    m_values: str = "3"
    steps: int = 32

    def model_config(self) -> ModelConfig:
        fuse = {"sgcn": "subgraph_only", "hybrid": "hybrid"}.get(self.model)
        if fuse is None:
            raise ValidationError(f"--model must be 'sgcn' or 'hybrid', got {self.model!r}")
        return ModelConfig(D=self.D, m=self.m, hidden_dims=_ints(self.hidden, "hidden"),
                           global_layers=self.global_layers, fuse=fuse, activation=self.activation,
                           pool_mode=self.pool, lr=self.lr, epochs=self.epochs, batch=self.batch,
                           imbalance_mode=self.imbalance, seed=self.seed)

    def worker_threads(self) -> int:
        if self.threads < 0:
            raise ValidationError(f"--threads must be >= 0, got {self.threads}")
        if self.threads:
            return self.threads
        if hasattr(os, "sched_getaffinity"):
            return len(os.sched_getaffinity(0))
        return os.cpu_count() or 1

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(n=self.n, imbalance_ratio=self.ratio, feature_dim=self.feature_dim,
                             relational_flip_prob=self.flip, seed=self.seed, separation=self.separation,
                             neighbors=self.neighbors)


_DEFAULTS = RunConfig()
_FIELDS = {f.name for f in fields(RunConfig)}

# flag name, config key, type, help, commands that accept it
_FLAGS = [
    ("--n", "n", int, "number of borrowers", {"gen"}),
    ("--ratio", "ratio", float, "positives per negative", {"gen"}),
    ("--feature-dim", "feature_dim", int, "feature columns", {"gen"}),
    ("--flip", "flip", float, "probability of neighbourhood-majority relabelling", {"gen"}),
    ("--separation", "separation", float, "class-mean distance along the first axis", {"gen"}),
    ("--neighbors", "neighbors", int, "neighbours voting in relabelling", {"gen"}),
    ("--data", "data", str, "input CSV dataset", {"train", "eval", "sweep", "probe"}),
    ("--label-column", "label_column", str, "label column name", {"train", "eval", "sweep", "probe"}),
    ("--model", "model", str, "architecture: sgcn or hybrid", {"train", "eval", "sweep"}),
    ("--D", "D", int, "tree depth", {"train", "eval"}),
    ("--m", "m", int, "tree arity and neighbours per node", {"train", "eval", "probe"}),
    ("--hidden", "hidden", str, "comma-separated widths; first is the branch width", {"train", "eval", "sweep"}),
    ("--global-layers", "global_layers", int, "global propagation layers (hybrid)", {"train", "eval", "sweep"}),
    ("--activation", "activation", str, "hidden activation", {"train", "eval", "sweep"}),
    ("--pool", "pool", str, "tree pooling: max or avg", {"train", "eval", "sweep"}),
    ("--lr", "lr", float, "learning rate", {"train", "eval", "sweep"}),
    ("--epochs", "epochs", int, "training epochs", {"train", "eval", "sweep"}),
    ("--batch", "batch", int, "mini-batch size (full batch when omitted)", {"train", "eval", "sweep"}),
    ("--imbalance", "imbalance", str, "none, oversample or class_weights", {"train", "eval", "sweep"}),
    ("--repeats", "repeats", int, "independent reshuffles", {"eval"}),
    ("--folds", "folds", int, "folds per reshuffle", {"eval", "sweep"}),
    ("--method", "method", str, "model or mlp (features-only baseline)", {"eval", "sweep"}),
    ("--D-values", "D_values", str, "comma-separated depths", {"sweep"}),
    ("--m-values", "m_values", str, "comma-separated arities", {"sweep"}),
    ("--steps", "steps", int, "propagation steps", {"probe"}),
]
# sweep takes --D/--m as value lists
_SWEEP_ALIASES = [("--D", "D_values"), ("--m", "m_values")]


class UsageError(Exception):
    pass


def _ints(text, name: str) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"{name} must be comma-separated integers, got {text!r}") from None
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file of settings (flags override it)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help=f"global seed; env {SEED_ENV} also accepted (default: {_DEFAULTS.seed})")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads for independent runs; 0 uses every available core "
                             f"(default: {_DEFAULTS.threads})")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path")

    parser = _Parser(prog="creditgcn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"gen": "write a synthetic borrower CSV", "train": "train one model on a CSV",
             "eval": "repeated k-fold evaluation", "sweep": "accuracy over (D, m) pairs",
             "probe": "over-smoothing similarity per propagation step"}
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        for flag, key, typ, desc, cmds in _FLAGS:
            if name not in cmds:
                continue
            if name == "sweep" and flag in ("--D", "--m"):
                continue
            p.add_argument(flag, dest=key, type=typ, default=argparse.SUPPRESS,
                           help=f"{desc} (default: {getattr(_DEFAULTS, key)})")
        if name == "sweep":
            for flag, key in _SWEEP_ALIASES:
                p.add_argument(flag, dest=key, default=argparse.SUPPRESS,
                               help=f"comma-separated values (default: {getattr(_DEFAULTS, key)})")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    values = asdict(_DEFAULTS)
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
        unknown = sorted(set(doc) - _FIELDS)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        values.update(doc)
    if SEED_ENV in os.environ:
        try:
            values["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ValidationError(f"{SEED_ENV} must be an integer") from None
    for key, val in vars(args).items():
        if key in _FIELDS:
            values[key] = val
    return RunConfig(**values)


def _require(cfg: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if getattr(cfg, k) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _echo(cfg: RunConfig, command: str) -> dict:
    return {"command": command, **asdict(cfg)}


def _write_sidecar(path: Path, cfg: RunConfig, command: str, **extra) -> None:
    doc = {"config": _echo(cfg, command), **extra}
    Path(str(path) + ".json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _load(cfg: RunConfig):
    return load_csv(cfg.data, cfg.label_column)


def cmd_gen(cfg: RunConfig) -> int:
    _require(cfg, "out")
    d = gen_synthetic(cfg.synthetic_spec())
    out = Path(cfg.out)
    write_csv(d, out)
    neg, pos = d.class_counts()
    _write_sidecar(out, cfg, "gen", spec=asdict(cfg.synthetic_spec()), counts={"0": neg, "1": pos},
                   labels_changed_by_relabel=d.preprocessing_report["labels_changed_by_relabel"])
    print(f"wrote {out}: {d.n} rows, {pos} positive (non-default), {neg} negative (default)")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "data", "out")
    config = cfg.model_config()
    config.validate()
    d = _load(cfg)
    full, _ = normalize(d)
    g = build_knn_graph(full, config.m)
    trees = extract_all(g, config.D, config.m)
    model = train(config, g, trees, d.labels, np.arange(d.n))
    out = Path(cfg.out)
    doc = json.loads(model.to_json())
    doc["run_config"] = _echo(cfg, "train")
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    hist = out.with_name(out.stem + "_history.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss"])
    for i, v in enumerate(model.history):
        w.writerow([i, repr(v)])
    hist.write_text(buf.getvalue())
    _write_sidecar(hist, cfg, "train")
    final = model.history[-1] if model.history else float("nan")
    print(f"final train loss {final:.6f}; wrote {out} and {hist}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "data", "out")
    config = cfg.model_config()
    d = _load(cfg)
    res = run_experiment(config, d, repeats=cfg.repeats, folds=cfg.folds, seed=cfg.seed,
                         method=cfg.method, threads=cfg.worker_threads())
    out = Path(cfg.out)
    doc = res.to_dict()
    doc["run_config"] = _echo(cfg, "eval")
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    runs_csv = out.with_suffix(".csv")
    runs_csv.write_text(res.to_csv())
    _write_sidecar(runs_csv, cfg, "eval")
    print(f"{len(res.runs)} runs ({cfg.repeats} repeats x {cfg.folds} folds)")
    for k in METRICS:
        print(f"{k:>9}: {100 * res.mean[k]:6.2f} +/- {100 * res.std[k]:5.2f}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    _require(cfg, "data", "out")
    Ds, ms = _ints(cfg.D_values, "--D"), _ints(cfg.m_values, "--m")
    if not Ds or not ms:
        raise UsageError("sweep needs at least one --D and one --m value")
    d = _load(cfg)
    rows = sweep_dm(cfg.model_config(), d, Ds, ms, seed=cfg.seed, folds=cfg.folds,
                    method=cfg.method, threads=cfg.worker_threads())
    out = Path(cfg.out)
    out.write_text(sweep_to_csv(rows))
    _write_sidecar(out, cfg, "sweep")
    for r in rows:
        print(f"D={r['D']} m={r['m']} accuracy={100 * r['accuracy']:.2f}")
    return 0


def cmd_probe(cfg: RunConfig) -> int:
    _require(cfg, "data", "out")
    if cfg.steps < 1:
        raise UsageError(f"--steps must be >= 1, got {cfg.steps}")
    d = _load(cfg)
    full, _ = normalize(d)
    g = build_knn_graph(full, cfg.m)
    # graph from z-scored columns, propagation from the raw feature matrix
    sims = oversmoothing_probe(g, cfg.steps, features=d.features)
    out = Path(cfg.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "mean_cosine_similarity"])
    for t, s in enumerate(sims, start=1):
        w.writerow([t, repr(float(s))])
    out.write_text(buf.getvalue())
    _write_sidecar(out, cfg, "probe")
    print(f"similarity after {cfg.steps} steps: {sims[-1]:.6f}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "probe": cmd_probe}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ValidationError, SchemaError, ShapeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, TrainingError, NumericError, ConsistencyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
