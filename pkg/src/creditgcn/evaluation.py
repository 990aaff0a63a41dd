"""Repeated k-fold protocol, metrics, D/m sweep, over-smoothing probe, MLP baseline."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import layers as L
from .data import Dataset, normalize
from .errors import ShapeError, ValidationError
from .graph import Graph, build_knn_graph
from .model import ModelConfig, predict, train, training_targets
from .numeric import make_rng, sigmoid
from .trees import extract_all

METRICS = ("precision", "accuracy", "recall", "f1")

# Published numbers from the original proprietary 3,000-borrower study, in
# percent. Documentation only; nothing in this package tries to match them.
PUBLISHED_REFERENCE = {
    "SGCNs": {"precision": 78.83, "accuracy": 68.90, "recall": 85.51, "f1": 76.70},
    "GCN": {"precision": 74.91, "accuracy": 67.07, "recall": 79.85, "f1": 72.90},
    "SVM": {"precision": 67.28, "accuracy": 62.72, "recall": 66.23, "f1": 64.43},
    "Decision Tree": {"precision": 64.37, "accuracy": 64.84, "recall": 64.33, "f1": 64.52},
    "BP": {"precision": 72.97, "accuracy": 67.42, "recall": 76.03, "f1": 71.47},
}


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    accuracy: float
    recall: float
    f1: float
    positive_class: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(pred, truth, positive_class: int = 1) -> MetricsReport:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"{pred.size} predictions for {truth.size} labels")
    if pred.size == 0:
        raise ValidationError("cannot compute metrics on zero samples")
    pp = pred == positive_class
    tp_ = truth == positive_class
    tp = int(np.sum(pp & tp_))
    fp = int(np.sum(pp & ~tp_))
    fn = int(np.sum(~pp & tp_))
    tn = int(pred.size - tp - fp - fn)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(tp, fp, tn, fn, precision, (tp + tn) / pred.size, recall, f1, positive_class)


def kfold_split(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``0..n-1`` and cut into ``k`` folds, the larger folds first."""
    if not 2 <= k <= n:
        raise ValidationError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = rng.permutation(n)
    base, extra = divmod(n, k)
    folds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(np.sort(perm[start:start + size]))
        start += size
    return folds


@dataclass
class ExperimentResult:
    runs: list[dict]
    mean: dict
    std: dict
    config: dict
    seeds: list[int]
    protocol: dict = field(default_factory=dict)

    @property
    def reports(self) -> list[MetricsReport]:
        return [MetricsReport(**r["metrics"]) for r in self.runs]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "fold", "seed", "n_test", "tp", "fp", "tn", "fn", *METRICS])
        for r in self.runs:
            m = r["metrics"]
            w.writerow([r["repeat"], r["fold"], r["seed"], len(r["test_ids"]),
                        m["tp"], m["fp"], m["tn"], m["fn"], *(repr(m[k]) for k in METRICS)])
        return buf.getvalue()


def aggregate(reports: list[MetricsReport]) -> tuple[dict, dict]:
    """Mean and population standard deviation of each metric."""
    mean, std = {}, {}
    for k in METRICS:
        vals = np.array([getattr(r, k) for r in reports], dtype=np.float64)
        mean[k] = float(vals.mean())
        std[k] = float(vals.std())
    return mean, std


def prepare_split(d: Dataset, train_ids, m: int, depth: int | None = None):
    """Z-score with training-row statistics, then build the graph over all rows."""
    train_ds, (full,) = normalize(d.subset(train_ids), [d])
    g = build_knn_graph(full, m)
    trees = extract_all(g, depth, m) if depth is not None else None
    return g, trees


def _fit_mlp(x, labels, train_ids, config: ModelConfig):
    rng = make_rng(config.seed)
    h = config.width
    p1 = L.init_layer(x.shape[1], h, rng)
    p2 = L.init_layer(h, 1, rng)
    ids, cw = training_targets(labels, train_ids, config.imbalance_mode, make_rng(config.seed + 1))
    f = config.activation
    for _ in range(config.epochs):
        if config.batch is None or config.batch >= ids.size:
            batches = [ids]
        else:
            order = ids[rng.permutation(ids.size)]
            batches = [order[i:i + config.batch] for i in range(0, order.size, config.batch)]
        for bid in batches:
            hid, c1 = L.dense_forward(x[bid], p1, f)
            z, c2 = L.dense_forward(hid, p2, "identity")
            _, dz = L.weighted_bce_loss(sigmoid(z[:, 0]), labels[bid], cw)
            dh, dW2, db2 = L.dense_backward(dz[:, None], c2)
            _, dW1, db1 = L.dense_backward(dh, c1)
            for arr, g in ((p1.W, dW1), (p1.b, db1), (p2.W, dW2), (p2.b, db2)):
                arr -= config.lr * g
    return p1, p2


def baseline_mlp(d: Dataset, split, hyper: ModelConfig | None = None, seed: int = 0) -> MetricsReport:
    """One-hidden-layer feed-forward classifier on node features only.

    Same loss, optimizer, width, epochs and imbalance handling as the graph
    model described by ``hyper``; it never sees the adjacency.
    """
    train_ids, test_ids = (np.asarray(s, dtype=np.int64) for s in split)
    config = replace(hyper or ModelConfig(), seed=seed)
    config.validate()
    _, (full,) = normalize(d.subset(train_ids), [d])
    p1, p2 = _fit_mlp(full.features, d.labels, train_ids, config)
    hid = L.dense(full.features[test_ids], p1, config.activation)
    probs = sigmoid(L.dense(hid, p2)[:, 0])
    return compute_metrics((probs >= 0.5).astype(np.int64), d.labels[test_ids])


def _run_one(config: ModelConfig, d: Dataset, train_ids, test_ids, seed: int, method: str) -> MetricsReport:
    if method == "mlp":
        return baseline_mlp(d, (train_ids, test_ids), config, seed)
    cfg = replace(config, seed=seed)
    g, trees = prepare_split(d, train_ids, cfg.m, cfg.D)
    model = train(cfg, g, trees, d.labels, train_ids)
    return compute_metrics(predict(model, g, trees, nodes=test_ids), d.labels[test_ids])


def run_experiment(config: ModelConfig, d: Dataset, repeats: int = 10, folds: int = 3, seed: int = 0,
                   method: str = "model", threads: int = 1) -> ExperimentResult:
    """``repeats`` independent shuffles times ``folds`` folds, one trained model per run.

    ``method`` is ``"model"`` (the configured graph network) or ``"mlp"``
    (:func:`baseline_mlp`).
    """
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    if method not in ("model", "mlp"):
        raise ValidationError(f"method must be 'model' or 'mlp', got {method!r}")
    config.validate()
    split_seeds = np.random.SeedSequence(seed).generate_state(repeats).tolist()
    jobs = []
    for r, s in enumerate(split_seeds):
        fold_ids = kfold_split(d.n, folds, make_rng(s))
        for f, test_ids in enumerate(fold_ids):
            train_ids = np.sort(np.concatenate([fold_ids[j] for j in range(folds) if j != f]))
            jobs.append((r, f, int(s) + f, train_ids, test_ids))

    def work(job):
        r, f, run_seed, tr, te = job
        return _run_one(config, d, tr, te, run_seed, method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(work, jobs))
    else:
        reports = [work(j) for j in jobs]

    runs = [{"repeat": r, "fold": f, "seed": s, "test_ids": te.tolist(), "metrics": rep.to_dict()}
            for (r, f, s, _, te), rep in zip(jobs, reports)]
    mean, std = aggregate(reports)
    return ExperimentResult(runs, mean, std, config.to_dict(), [int(s) for s in split_seeds],
                            {"repeats": repeats, "folds": folds, "seed": seed, "method": method, "n": d.n})


def sweep_dm(base: ModelConfig, d: Dataset, D_values, m_values, seed: int = 0, folds: int = 3,
             method: str = "model", threads: int = 1) -> list[dict]:
    """Mean accuracy (and F1) for every (D, m) pair, one repeat each, sorted by (D, m)."""
    D_values, m_values = sorted(set(D_values)), sorted(set(m_values))
    if not D_values or not m_values:
        raise ValidationError("sweep needs at least one D and one m value")
    if min(D_values) < 1 or min(m_values) < 1:
        raise ValidationError("D and m values must be >= 1")
    rows = []
    for D in D_values:
        for m in m_values:
            cfg = replace(base, D=D, m=m, conv_pool_pattern=None)
            res = run_experiment(cfg, d, repeats=1, folds=folds, seed=seed, method=method, threads=threads)
            rows.append({"D": D, "m": m, "accuracy": res.mean["accuracy"], "f1": res.mean["f1"]})
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["D", "m", "accuracy", "f1"])
    for r in rows:
        w.writerow([r["D"], r["m"], repr(r["accuracy"]), repr(r["f1"])])
    return buf.getvalue()


def mean_pairwise_cosine(h) -> float:
    """Mean cosine similarity over all unordered node pairs (1 for a single node)."""
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[0]
    if n < 2:
        return 1.0
    norms = np.linalg.norm(h, axis=1)
    u = h / np.where(norms > 0, norms, 1.0)[:, None]
    s = u @ u.T
    iu = np.triu_indices(n, k=1)
    return float(np.mean(s[iu]))


def oversmoothing_probe(g: Graph, steps: int, features=None) -> np.ndarray:
    """Similarity after each of ``steps`` applications of the propagation operator.

    No weights and no nonlinearity: ``H <- A_hat @ H`` starting from the raw
    features.
    """
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    h = np.asarray(g.features if features is None else features, dtype=np.float64)
    if h.shape[0] == 0:
        raise ValidationError("probe needs a non-empty graph")
    out = np.empty(steps)
    for t in range(steps):
        h = g.norm_adjacency @ h
        out[t] = mean_pairwise_cosine(h)
    return out
