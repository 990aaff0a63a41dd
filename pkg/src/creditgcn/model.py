"""Subgraph (SGCN) and hybrid local/global (HybridGCNN) node classifiers.

Local branch: per-slot embedding, then the conv/pool stack collapses each
node's tree to its root vector. Global branch: stacked propagation layers
over the whole graph. The hybrid fuses the two with attention before a
single dense head producing the positive-class logit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import layers as L
from .data import class_weights_for, oversample_ids
from .errors import TrainingError, ValidationError
from .numeric import ACTIVATIONS, make_rng, sigmoid
from .trees import PAD, TreeBatch

FUSE_MODES = ("subgraph_only", "hybrid")
IMBALANCE_MODES = ("none", "oversample", "class_weights")


def default_pattern(depth: int) -> str:
    """Alternate conv and pool, starting with conv, for ``depth - 1`` reductions."""
    return "".join("cp"[i % 2] for i in range(depth - 1))


@dataclass(frozen=True)
class ModelConfig:
    D: int = 3
    m: int = 3
    hidden_dims: tuple[int, ...] = (16,)
    conv_pool_pattern: str | None = None
    global_layers: int = 2
    fuse: str = "hybrid"
    activation: str = "relu"
    pool_mode: str = "max"
    lr: float = 0.05
    epochs: int = 200
    batch: int | None = None
    imbalance_mode: str = "class_weights"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def pattern(self) -> str:
        return default_pattern(self.D) if self.conv_pool_pattern is None else self.conv_pool_pattern

    @property
    def width(self) -> int:
        return self.hidden_dims[0]

    def validate(self) -> None:
        if self.D < 1 or self.m < 1:
            raise ValidationError(f"D and m must be >= 1, got D={self.D}, m={self.m}")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ValidationError(f"hidden_dims must be non-empty positive widths, got {self.hidden_dims}")
        if len(self.pattern) != self.D - 1 or set(self.pattern) - {"c", "p"}:
            raise ValidationError(
                f"conv_pool_pattern {self.pattern!r} must be {self.D - 1} characters from 'c'/'p'")
        if self.global_layers < 1:
            raise ValidationError(f"global_layers must be >= 1, got {self.global_layers}")
        if self.fuse not in FUSE_MODES:
            raise ValidationError(f"fuse must be one of {FUSE_MODES}, got {self.fuse!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.pool_mode not in ("max", "avg"):
            raise ValidationError(f"pool_mode must be 'max' or 'avg', got {self.pool_mode!r}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch is not None and self.batch < 1:
            raise ValidationError(f"batch must be positive, got {self.batch}")
        if self.imbalance_mode not in IMBALANCE_MODES:
            raise ValidationError(f"imbalance_mode must be one of {IMBALANCE_MODES}, got {self.imbalance_mode!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(eq=False)
class TrainedModel:
    config: ModelConfig
    params: dict
    in_dim: int
    history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return L.dumps_params(self.params, self.config.to_dict(), in_dim=self.in_dim,
                              history=self.history, val_history=self.val_history)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        params, doc = L.loads_params(text)
        return cls(ModelConfig.from_dict(doc["config"]), params, doc["in_dim"],
                   list(doc.get("history", [])), list(doc.get("val_history", [])))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_json(Path(path).read_text())


def init_model(config: ModelConfig, in_dim: int) -> TrainedModel:
    config.validate()
    rng = make_rng(config.seed)
    h = config.width
    params = {"embed": L.init_layer(in_dim, h, rng)}
    for i, op in enumerate(config.pattern):
        if op == "c":
            params[f"conv{i}"] = L.init_layer(h, h, rng)
    if config.fuse == "hybrid":
        for i in range(config.global_layers):
            params[f"global{i}"] = L.init_layer(in_dim if i == 0 else h, h, rng)
        params["attention"] = L.init_attention(h, rng)
    prev = h
    for i, w in enumerate(config.hidden_dims[1:]):
        params[f"head{i}"] = L.init_layer(prev, w, rng)
        prev = w
    params["out"] = L.init_layer(prev, 1, rng)
    return TrainedModel(config, params, in_dim)


def _check_inputs(model: TrainedModel, features: np.ndarray, trees: TreeBatch) -> None:
    cfg = model.config
    if (trees.depth, trees.arity) != (cfg.D, cfg.m):
        raise ValidationError(f"trees were built with (D, m)=({trees.depth}, {trees.arity}) "
                              f"but the model expects ({cfg.D}, {cfg.m})")
    if features.shape[1] != model.in_dim:
        raise ValidationError(f"graph features have {features.shape[1]} columns, model expects {model.in_dim}")


def _forward(model: TrainedModel, features, a_hat, trees: TreeBatch, ids, force_alpha_local=None):
    """Logits for ``ids`` plus the cache list for :func:`_backward`."""
    cfg, p, f = model.config, model.params, model.config.activation
    caches = {}
    nodes = trees.nodes[ids]
    mask = trees.mask[ids].astype(np.float64)
    x = features[np.where(nodes == PAD, 0, nodes)] * mask[..., None]

    e, caches["embed"] = L.dense_forward(x, p["embed"], f)
    e = e * mask[..., None]
    caches["embed_mask"] = mask
    depth = cfg.D
    stack = []
    for i, op in enumerate(cfg.pattern):
        if op == "c":
            e, mask, c = L.tree_conv_forward(e, mask, p[f"conv{i}"], (depth, cfg.m), f)
        else:
            e, mask, c = L.tree_pool_forward(e, mask, (depth, cfg.m), cfg.pool_mode)
        stack.append((op, i, c))
        depth -= 1
    caches["stack"] = stack
    caches["local_shape"] = e.shape
    h_local = e[:, 0, :]

    alpha = None
    if cfg.fuse == "hybrid":
        hg = features
        gcaches = []
        for i in range(cfg.global_layers):
            hg, c = L.global_gcn_forward(a_hat, hg, p[f"global{i}"], f)
            gcaches.append(c)
        caches["global"] = gcaches
        caches["global_shape"] = hg.shape
        h, alpha, caches["attention"] = L.attention_fuse_forward(h_local, hg[ids], p["attention"], force_alpha_local)
    else:
        h = h_local

    heads = []
    for i in range(len(cfg.hidden_dims) - 1):
        h, c = L.dense_forward(h, p[f"head{i}"], f)
        heads.append(c)
    caches["heads"] = heads
    logits, caches["out"] = L.dense_forward(h, p["out"], "identity")
    caches["ids"] = ids
    return logits[:, 0], alpha, caches


def _backward(model: TrainedModel, caches, dlogits) -> dict:
    cfg = model.config
    grads = {}
    dh, dW, db = L.dense_backward(dlogits[:, None], caches["out"])
    grads["out"] = (dW, db)
    for i in reversed(range(len(caches["heads"]))):
        dh, dW, db = L.dense_backward(dh, caches["heads"][i])
        grads[f"head{i}"] = (dW, db)

    if cfg.fuse == "hybrid":
        dl, dg_rows, da, dbias = L.attention_fuse_backward(dh, caches["attention"])
        grads["attention"] = (da, dbias)
        dg = np.zeros(caches["global_shape"])
        np.add.at(dg, caches["ids"], dg_rows)
        for i in reversed(range(cfg.global_layers)):
            dg, dW, db = L.global_gcn_backward(dg, caches["global"][i])
            grads[f"global{i}"] = (dW, db)
    else:
        dl = dh

    de = np.zeros(caches["local_shape"])
    de[:, 0, :] = dl
    for op, i, c in reversed(caches["stack"]):
        if op == "c":
            de, dW, db = L.tree_conv_backward(de, c)
            grads[f"conv{i}"] = (dW, db)
        else:
            de = L.tree_pool_backward(de, c)
    de = de * caches["embed_mask"][..., None]
    _, dW, db = L.dense_backward(de, caches["embed"])
    grads["embed"] = (dW, db)
    return grads


def _graph_arrays(g):
    return np.asarray(g.features, dtype=np.float64), g.norm_adjacency


def loss_and_grads(model: TrainedModel, g, trees: TreeBatch, labels, ids, class_weights=(1.0, 1.0),
                   force_alpha_local=None):
    """Weighted BCE over ``ids`` and its gradient for every parameter array."""
    features, a_hat = _graph_arrays(g)
    _check_inputs(model, features, trees)
    ids = np.asarray(ids, dtype=np.int64)
    logits, _, caches = _forward(model, features, a_hat, trees, ids, force_alpha_local)
    p = sigmoid(logits)
    loss, dlogits = L.weighted_bce_loss(p, np.asarray(labels)[ids], class_weights)
    return loss, _backward(model, caches, dlogits)


def forward(model: TrainedModel, g, trees: TreeBatch, nodes=None, force_alpha_local=None,
            return_alpha: bool = False):
    """Positive-class probability for each node in ``nodes`` (all nodes by default)."""
    features, a_hat = _graph_arrays(g)
    _check_inputs(model, features, trees)
    ids = np.arange(features.shape[0]) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= features.shape[0]):
        raise ValidationError("node ids out of range")
    logits, alpha, _ = _forward(model, features, a_hat, trees, ids, force_alpha_local)
    # float64 sigmoid rounds to exactly 0 or 1 past |logit| ~ 37
    probs = np.clip(sigmoid(logits), L.PROB_CLAMP, 1.0 - L.PROB_CLAMP)
    return (probs, alpha) if return_alpha else probs


def predict(model: TrainedModel, g, trees: TreeBatch, threshold: float = 0.5, nodes=None) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    return (forward(model, g, trees, nodes) >= threshold).astype(np.int64)


def _sgd_step(model: TrainedModel, grads: dict, lr: float) -> None:
    for name, gs in grads.items():
        for arr, g in zip(model.params[name].arrays().values(), gs):
            arr -= lr * g


def training_targets(labels, train_ids, mode: str, rng: np.random.Generator):
    """Ids driving the loss and the class weights for ``mode``."""
    train_ids = np.asarray(train_ids, dtype=np.int64)
    y = np.asarray(labels)[train_ids]
    if np.unique(y).size < 2:
        raise ValidationError("the training split must contain both classes")
    if mode == "class_weights":
        cw = class_weights_for(y)
        return train_ids, (cw[0], cw[1])
    if mode == "oversample":
        return train_ids[oversample_ids(y, rng)], (1.0, 1.0)
    return train_ids, (1.0, 1.0)


def train(config: ModelConfig, g, trees: TreeBatch, labels, train_ids, val_ids=()) -> TrainedModel:
    """Plain gradient descent on the class-weighted BCE of the training nodes.

    Transductive: the graph covers every node, only ``train_ids`` labels are
    used. ``batch=None`` means full batch.
    """
    config.validate()
    labels = np.asarray(labels, dtype=np.int64)
    train_ids = np.asarray(train_ids, dtype=np.int64)
    val_ids = np.asarray(val_ids, dtype=np.int64)
    if np.intersect1d(train_ids, val_ids).size:
        raise ValidationError("train and validation ids overlap")
    model = init_model(config, g.features.shape[1])
    rng = make_rng(config.seed + 1)
    ids, cw = training_targets(labels, train_ids, config.imbalance_mode, rng)

    for epoch in range(config.epochs):
        if config.batch is None or config.batch >= ids.size:
            batches = [ids]
        else:
            order = ids[rng.permutation(ids.size)]
            batches = [order[i:i + config.batch] for i in range(0, order.size, config.batch)]
        total = 0.0
        for bid in batches:
            # overflow shows up as a non-finite loss, reported below with the epoch
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grads(model, g, trees, labels, bid, cw)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch)
            total += loss * bid.size
            _sgd_step(model, grads, config.lr)
        model.history.append(total / ids.size)
        if val_ids.size:
            p = forward(model, g, trees, val_ids)
            model.val_history.append(L.weighted_bce_loss(p, labels[val_ids], cw)[0])
    return model


def with_overrides(config: ModelConfig, **kw) -> ModelConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})


def describe(model: TrainedModel) -> str:
    shapes = {k: {a: list(v.shape) for a, v in p.arrays().items()} for k, p in model.params.items()}
    return json.dumps({"config": model.config.to_dict(), "shapes": shapes}, sort_keys=True)
