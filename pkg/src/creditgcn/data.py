"""Tabular borrower data: CSV ingestion, z-scoring, synthetic generation, rebalancing.

Label convention: 1 = non-default (the positive class), 0 = default.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError, ShapeError, ValidationError
from .graph import similarity_matrix, top_m_selection
from .numeric import make_rng


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    preprocessing_report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError(f"{self.labels.size} labels for {self.features.shape[0]} rows")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValidationError("labels must be 0 or 1")
        if len(self.feature_names) != self.features.shape[1]:
            raise SchemaError(f"{len(self.feature_names)} names for {self.features.shape[1]} columns")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def subset(self, ids) -> "Dataset":
        ids = np.asarray(ids, dtype=np.int64)
        return Dataset(self.features[ids], self.labels[ids], list(self.feature_names),
                       dict(self.preprocessing_report))


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional Gaussian borrowers with neighbourhood-majority relabelling.

    Positives are centred at ``+separation/2`` and negatives at
    ``-separation/2`` along the first axis, unit variance everywhere.
    ``imbalance_ratio`` is positives per negative.
    """

    n: int = 3000
    imbalance_ratio: float = 5.0
    feature_dim: int = 8
    relational_flip_prob: float = 0.0
    seed: int = 0
    separation: float = 2.0
    neighbors: int = 3

    def validate(self) -> None:
        if self.n < 2:
            raise ValidationError(f"n must be >= 2, got {self.n}")
        if self.feature_dim < 1:
            raise ValidationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not self.imbalance_ratio > 0:
            raise ValidationError(f"imbalance_ratio must be positive, got {self.imbalance_ratio}")
        if not 0.0 <= self.relational_flip_prob <= 1.0:
            raise ValidationError(f"relational_flip_prob must lie in [0, 1], got {self.relational_flip_prob}")
        if not 1 <= self.neighbors < self.n:
            raise ValidationError(f"neighbors must be in [1, n), got {self.neighbors}")


def _parse_float(s: str) -> float | None:
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_label(s: str) -> int | None:
    v = _parse_float(s.strip())
    if v == 0.0:
        return 0
    if v == 1.0:
        return 1
    return None


def load_csv(path, label_column: str = "label") -> Dataset:
    """Read a header-first CSV, drop unlabeled rows, median-impute numeric
    columns and one-hot encode the rest. Features are not normalized here."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: line 1: missing header row") from None
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from None
        if label_column not in header:
            raise SchemaError(f"{path}: label column {label_column!r} not in header {header}")
        rows, lines = [], []
        try:
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
                rows.append(row)
                lines.append(reader.line_num)
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from None

    li = header.index(label_column)
    dropped = [ln for row, ln in zip(rows, lines) if row[li].strip() == ""]
    kept = [(row, ln) for row, ln in zip(rows, lines) if row[li].strip() != ""]
    labels = [_parse_label(row[li]) for row, _ in kept]
    bad = [ln for (_, ln), y in zip(kept, labels) if y is None]
    if bad:
        raise ValidationError(f"{path}: label values outside {{0, 1}} on lines {bad}")

    columns, names = [], []
    report = {"dropped_unlabeled_lines": dropped, "imputed": {}, "one_hot": {}}
    for ci, name in enumerate(header):
        if ci == li:
            continue
        raw = [row[ci].strip() for row, _ in kept]
        present = [s for s in raw if s != ""]
        parsed = [_parse_float(s) for s in present]
        if all(p is not None for p in parsed):
            med = float(np.median(parsed)) if parsed else 0.0
            n_missing = len(raw) - len(present)
            if n_missing:
                report["imputed"][name] = {"count": n_missing, "median": med}
            columns.append([med if s == "" else float(s) for s in raw])
            names.append(name)
        else:
            cats = sorted(set(present))
            report["one_hot"][name] = cats
            for c in cats:
                columns.append([1.0 if s == c else 0.0 for s in raw])
                names.append(f"{name}={c}")

    feats = np.array(columns, dtype=np.float64).T if columns else np.zeros((len(kept), 0))
    feats = feats.reshape(len(kept), len(names))
    return Dataset(feats, np.array(labels, dtype=np.int64), names, report)


def write_csv(d: Dataset, path, label_column: str = "label") -> None:
    """Write features with shortest round-trip float formatting, label last."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, label_column])
        for row, y in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])


def normalize(train: Dataset, others: list[Dataset] | None = None) -> tuple[Dataset, list[Dataset]]:
    """Z-score every dataset with the training split's column statistics.

    Constant training columns are centred but not scaled.
    """
    others = others or []
    for o in others:
        if list(o.feature_names) != list(train.feature_names):
            raise ValidationError("feature schema of a dataset differs from the training split")
    mean = train.features.mean(axis=0) if train.n else np.zeros(train.features.shape[1])
    std = train.features.std(axis=0) if train.n else np.ones(train.features.shape[1])
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    const_names = [nm for nm, c in zip(train.feature_names, constant) if c]

    def apply(d: Dataset) -> Dataset:
        rep = dict(d.preprocessing_report)
        rep["normalization"] = {"mean": mean.tolist(), "std": scale.tolist(), "constant_columns": const_names}
        return replace(d, features=(d.features - mean) / scale, preprocessing_report=rep)

    return apply(train), [apply(o) for o in others]


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a labelled borrower table with relational label structure.

    With probability ``relational_flip_prob`` a node's label is replaced by
    the majority original label among its ``neighbors`` most cosine-similar
    nodes (similarity on globally z-scored features, ties keep the node's
    own label). A features-only model cannot see those neighbours' labels.
    """
    spec.validate()
    rng = make_rng(spec.seed)
    r = spec.imbalance_ratio
    n_pos = int(round(spec.n * r / (r + 1.0)))
    n_neg = spec.n - n_pos
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    labels = labels[rng.permutation(spec.n)]

    centre = np.zeros(spec.feature_dim)
    centre[0] = spec.separation / 2.0
    x = rng.standard_normal((spec.n, spec.feature_dim))
    x += np.where(labels[:, None] == 1, centre, -centre)

    flips = rng.random(spec.n) < spec.relational_flip_prob
    n_flipped = 0
    if np.any(flips):
        std = x.std(axis=0)
        z = (x - x.mean(axis=0)) / np.where(std > 0, std, 1.0)
        nbrs = top_m_selection(similarity_matrix(z), spec.neighbors)
        votes = labels[nbrs].sum(axis=1)
        majority = np.where(2 * votes > spec.neighbors, 1, np.where(2 * votes < spec.neighbors, 0, labels))
        new = np.where(flips, majority, labels)
        n_flipped = int(np.sum(new != labels))
        labels = new

    names = [f"x{i}" for i in range(spec.feature_dim)]
    report = {"synthetic": asdict(spec), "labels_changed_by_relabel": n_flipped}
    return Dataset(x, labels, names, report)


def class_weights_for(labels) -> dict[int, float]:
    """Inverse-frequency weights normalized so the weighted count equals n."""
    labels = np.asarray(labels)
    n = labels.size
    counts = {c: int(np.sum(labels == c)) for c in (0, 1)}
    if min(counts.values()) == 0:
        raise ValidationError(f"both classes are required, got counts {counts}")
    return {c: n / (2.0 * counts[c]) for c in (0, 1)}


def oversample_ids(labels, rng: np.random.Generator) -> np.ndarray:
    """Row ids (originals first) with minority rows drawn uniformly until parity."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if pos.size == 0 or neg.size == 0:
        raise ValidationError("both classes are required to oversample")
    minority, deficit = (neg, pos.size - neg.size) if neg.size < pos.size else (pos, neg.size - pos.size)
    extra = minority[rng.integers(0, minority.size, size=deficit)] if deficit else np.empty(0, dtype=np.int64)
    return np.concatenate([np.arange(labels.size), extra])


def rebalance(d: Dataset, mode: str, rng: np.random.Generator) -> tuple[Dataset, dict[int, float]]:
    neg, pos = d.class_counts()
    if neg == 0 or pos == 0:
        raise ValidationError(f"rebalance needs both classes, got counts (0: {neg}, 1: {pos})")
    if mode == "none":
        return d, {0: 1.0, 1: 1.0}
    if mode == "class_weights":
        return d, class_weights_for(d.labels)
    if mode == "oversample":
        out = d.subset(oversample_ids(d.labels, rng))
        out.preprocessing_report["oversampled_from"] = d.n
        return out, {0: 1.0, 1: 1.0}
    raise ValidationError(f"unknown rebalance mode {mode!r}")
