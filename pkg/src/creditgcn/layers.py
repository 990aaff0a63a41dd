"""Layer forward/backward passes.

Each ``*_forward`` returns its output plus a cache consumed by the matching
``*_backward``. Tree layers work on batches shaped ``(B, slots, C)`` with a
``(B, slots)`` mask; a tree of depth ``D`` becomes one of depth ``D - 1``.

Tree convolution for a non-leaf slot ``s`` with children ``c``::

    out[s] = f(x[s] + sum_{c real} W @ x[c] + b)

The self term is added unweighted, so ``W`` must be square.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .numeric import activation, activation_grad, softmax
from .trees import child_index, total_slots

PROB_CLAMP = 1e-12


@dataclass(eq=False)
class LayerParams:
    W: np.ndarray
    b: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


@dataclass(eq=False)
class AttentionParams:
    a: np.ndarray
    score_bias: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {"a": self.a, "score_bias": self.score_bias}


def init_layer(in_dim: int, out_dim: int, rng: np.random.Generator) -> LayerParams:
    """Glorot-uniform weights, zero bias."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return LayerParams(rng.uniform(-limit, limit, size=(out_dim, in_dim)), np.zeros(out_dim))


def init_attention(dim: int, rng: np.random.Generator) -> AttentionParams:
    limit = np.sqrt(6.0 / (dim + 1))
    return AttentionParams(rng.uniform(-limit, limit, size=dim), np.zeros(1))


def _tree_window(depth: int, arity: int, n_slots: int) -> tuple[np.ndarray, int]:
    if depth < 2:
        raise ValidationError(f"tree layers need depth >= 2, got {depth}")
    if n_slots != total_slots(depth, arity):
        raise ShapeError(f"{n_slots} slots do not form a depth-{depth} {arity}-ary tree")
    kids = child_index(depth, arity)
    return kids, kids.shape[0]


def _batched(x, mask):
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x, mask = x[None], mask[None]
    if mask.shape != x.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match features {x.shape}")
    return x, mask, single


# --- tree convolution -------------------------------------------------------

def tree_conv_forward(x, mask, params: LayerParams, tree_shape: tuple[int, int], f: str = "relu"):
    x, mask, single = _batched(x, mask)
    depth, arity = tree_shape
    kids, inner = _tree_window(depth, arity, x.shape[1])
    if params.W.shape != (x.shape[2], x.shape[2]):
        raise ShapeError(f"tree_conv needs a square weight matching feature dim {x.shape[2]}, got {params.W.shape}")
    kid_mask = mask[:, kids]
    agg = np.einsum("bsmc,bsm->bsc", x[:, kids], kid_mask)
    pre = x[:, :inner] + agg @ params.W.T + params.b
    act = activation(pre, f)
    out_mask = mask[:, :inner]
    out = act * out_mask[..., None]
    cache = (x.shape, kids, kid_mask, out_mask, agg, pre, act, params, f, single)
    if single:
        return out[0], out_mask[0], cache
    return out, out_mask, cache


def tree_conv_backward(grad_out, cache):
    shape, kids, kid_mask, out_mask, agg, pre, act, params, f, single = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if single:
        g = g[None]
    g = g * out_mask[..., None] * activation_grad(pre, act, f)
    dW = np.einsum("bso,bsi->oi", g, agg)
    db = g.sum(axis=(0, 1))
    dx = np.zeros(shape)
    inner = kids.shape[0]
    dx[:, :inner] += g
    dagg = g @ params.W
    b, _, m = kid_mask.shape
    contrib = dagg[:, :, None, :] * kid_mask[..., None]
    dx[:, kids.ravel()] += contrib.reshape(b, inner * m, shape[2])
    if single:
        dx = dx[0]
    return dx, dW, db


def tree_conv(x, mask, params: LayerParams, tree_shape: tuple[int, int], f: str = "relu"):
    out, out_mask, _ = tree_conv_forward(x, mask, params, tree_shape, f)
    return out, out_mask


# --- tree pooling -----------------------------------------------------------

def tree_pool_forward(x, mask, tree_shape: tuple[int, int], mode: str = "max"):
    """Pool each non-leaf slot over itself and its real children."""
    x, mask, single = _batched(x, mask)
    depth, arity = tree_shape
    kids, inner = _tree_window(depth, arity, x.shape[1])
    idx = np.concatenate([np.arange(inner)[:, None], kids], axis=1)
    window = x[:, idx]
    wmask = mask[:, idx]
    out_mask = mask[:, :inner]
    if mode == "max":
        masked = np.where(wmask[..., None] > 0, window, -np.inf)
        arg = np.argmax(masked, axis=2)
        pooled = np.take_along_axis(window, arg[:, :, None, :], axis=2)[:, :, 0, :]
        out = pooled * out_mask[..., None]
        extra = arg
    elif mode == "avg":
        count = np.maximum(wmask.sum(axis=2), 1.0)
        out = np.einsum("bswc,bsw->bsc", window, wmask) / count[..., None]
        out = out * out_mask[..., None]
        extra = count
    else:
        raise ValidationError(f"unknown pooling mode {mode!r}")
    cache = (x.shape, idx, wmask, out_mask, mode, extra, single)
    if single:
        return out[0], out_mask[0], cache
    return out, out_mask, cache


def tree_pool_backward(grad_out, cache):
    shape, idx, wmask, out_mask, mode, extra, single = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if single:
        g = g[None]
    g = g * out_mask[..., None]
    b, inner, w = wmask.shape
    if mode == "max":
        onehot = (np.arange(w)[None, None, :, None] == extra[:, :, None, :]).astype(np.float64)
        contrib = onehot * g[:, :, None, :]
    else:
        contrib = g[:, :, None, :] * (wmask / extra[..., None])[..., None]
    dx = np.zeros(shape)
    # a slot sits in its own window and in its parent's; add.at accumulates both
    np.add.at(dx, (slice(None), idx.ravel()), contrib.reshape(b, inner * w, shape[2]))
    if single:
        dx = dx[0]
    return dx


def tree_pool(x, mask, tree_shape: tuple[int, int], mode: str = "max"):
    out, out_mask, _ = tree_pool_forward(x, mask, tree_shape, mode)
    return out, out_mask


# --- global graph convolution ----------------------------------------------

def global_gcn_forward(a_hat, h, params: LayerParams, f: str = "relu"):
    a_hat = np.asarray(a_hat, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != a_hat.shape[0]:
        raise ShapeError(f"node features {h.shape} do not match propagation operator {a_hat.shape}")
    if h.shape[1] != params.in_dim:
        raise ShapeError(f"feature dim {h.shape[1]} does not match weight {params.W.shape}")
    prop = a_hat @ h
    pre = prop @ params.W.T + params.b
    out = activation(pre, f)
    return out, (a_hat, prop, pre, out, params, f)


def global_gcn_backward(grad_out, cache):
    a_hat, prop, pre, out, params, f = cache
    g = grad_out * activation_grad(pre, out, f)
    dW = g.T @ prop
    db = g.sum(axis=0)
    dh = a_hat.T @ (g @ params.W)
    return dh, dW, db


def global_gcn(g, h, params: LayerParams, f: str = "relu") -> np.ndarray:
    """``f(A_hat @ H @ W.T + b)``; ``g`` is a Graph or a propagation matrix."""
    a_hat = getattr(g, "norm_adjacency", g)
    return global_gcn_forward(a_hat, h, params, f)[0]


# --- attention fusion -------------------------------------------------------

def attention_fuse_forward(h_local, h_global, params: AttentionParams, force_alpha_local: float | None = None):
    """Softmax-weighted mix of the two branch embeddings, row by row.

    ``force_alpha_local`` pins the local weight (the global weight becomes
    ``1 - force_alpha_local``) and blocks gradients into the score vector.
    """
    hl = np.atleast_2d(np.asarray(h_local, dtype=np.float64))
    hg = np.atleast_2d(np.asarray(h_global, dtype=np.float64))
    if hl.shape != hg.shape:
        raise ShapeError(f"branch embeddings differ in shape: {hl.shape} vs {hg.shape}")
    if hl.shape[1] != params.a.size:
        raise ShapeError(f"embedding dim {hl.shape[1]} does not match score vector of size {params.a.size}")
    if force_alpha_local is None:
        # the shared score_bias shifts both scores equally and cancels in the
        # softmax, so it is left out rather than added and rounded away
        scores = np.stack([hl @ params.a, hg @ params.a], axis=1)
        alpha = softmax(scores, axis=1)
    else:
        alpha = np.tile([force_alpha_local, 1.0 - force_alpha_local], (hl.shape[0], 1))
    out = alpha[:, :1] * hl + alpha[:, 1:] * hg
    return out, alpha, (hl, hg, alpha, params, force_alpha_local is not None)


def attention_fuse_backward(grad_out, cache):
    hl, hg, alpha, params, forced = cache
    g = np.atleast_2d(grad_out)
    dhl = alpha[:, :1] * g
    dhg = alpha[:, 1:] * g
    if forced:
        return dhl, dhg, np.zeros_like(params.a), np.zeros(1)
    dalpha = np.stack([np.sum(g * hl, axis=1), np.sum(g * hg, axis=1)], axis=1)
    ds = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
    dhl += ds[:, :1] * params.a
    dhg += ds[:, 1:] * params.a
    da = ds[:, 0] @ hl + ds[:, 1] @ hg
    dbias = np.zeros(1)
    return dhl, dhg, da, dbias


def attention_fuse(h_local, h_global, params: AttentionParams, force_alpha_local: float | None = None):
    out, alpha, _ = attention_fuse_forward(h_local, h_global, params, force_alpha_local)
    if np.ndim(h_local) == 1:
        return out[0], alpha[0]
    return out, alpha


# --- dense ------------------------------------------------------------------

def dense_forward(h, params: LayerParams, f: str = "identity"):
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.in_dim:
        raise ShapeError(f"input dim {h.shape[-1]} does not match weight {params.W.shape}")
    pre = h @ params.W.T + params.b
    out = activation(pre, f)
    return out, (h, pre, out, params, f)


def dense_backward(grad_out, cache):
    h, pre, out, params, f = cache
    g = grad_out * activation_grad(pre, out, f)
    g2 = g.reshape(-1, params.out_dim)
    dW = g2.T @ h.reshape(-1, params.in_dim)
    db = g2.sum(axis=0)
    return g @ params.W, dW, db


def dense(h, params: LayerParams, f: str = "identity") -> np.ndarray:
    return dense_forward(h, params, f)[0]


# --- loss -------------------------------------------------------------------

def weighted_bce_loss(p, y, class_weights=(1.0, 1.0)):
    """Class-weighted binary cross-entropy.

    Returns ``(loss, dloss/dlogit)`` where ``p = sigmoid(logit)``; the
    gradient is ``w_i (p_i - y_i) / sum(w)``.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"{p.size} predictions for {y.size} labels")
    w0, w1 = (class_weights[0], class_weights[1])
    w = np.where(y > 0.5, w1, w0)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    total = w.sum()
    loss = -np.sum(w * (y * np.log(pc) + (1.0 - y) * np.log1p(-pc))) / total
    return float(loss), w * (p - y) / total


# --- serialization ----------------------------------------------------------

def params_to_dict(params: dict) -> dict:
    out = {}
    for name, p in params.items():
        kind = "attention" if isinstance(p, AttentionParams) else "layer"
        out[name] = {"kind": kind, **{k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                                       for k, v in p.arrays().items()}}
    return out


def params_from_dict(doc: dict) -> dict:
    params = {}
    for name, entry in doc.items():
        arrays = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in entry.items() if k != "kind"}
        params[name] = AttentionParams(**arrays) if entry["kind"] == "attention" else LayerParams(**arrays)
    return params


def dumps_params(params: dict, config: dict | None = None, **extra) -> str:
    """JSON document with config echo and row-major arrays.

    Python's float repr is the shortest string that round-trips, so the
    64-bit values reload bit-exactly.
    """
    doc = {"config": config or {}, "params": params_to_dict(params), **extra}
    return json.dumps(doc, indent=1, sort_keys=True)


def loads_params(text: str) -> tuple[dict, dict]:
    doc = json.loads(text)
    return params_from_dict(doc["params"]), doc
