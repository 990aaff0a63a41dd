"""Full m-ary tree neighbourhoods.

Slots are stored flat in (layer, position) order. Layer ``k`` (1-based)
holds ``m**(k-1)`` slots and slot ``(k, q)`` has children
``(k+1, m*q) .. (k+1, m*q + m - 1)``. Padded slots carry node id ``-1`` and
mask 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConsistencyError, ValidationError
from .graph import Graph

PAD = -1


def layer_sizes(depth: int, arity: int) -> list[int]:
    return [arity ** (k - 1) for k in range(1, depth + 1)]


def layer_offset(k: int, arity: int) -> int:
    """Flat index of the first slot in layer ``k`` (1-based)."""
    return sum(arity ** (i - 1) for i in range(1, k))


def total_slots(depth: int, arity: int) -> int:
    return layer_offset(depth + 1, arity)


def slot_position(slot: int, arity: int) -> tuple[int, int]:
    k = 1
    while layer_offset(k + 1, arity) <= slot:
        k += 1
    return k, slot - layer_offset(k, arity)


@lru_cache(maxsize=None)
def child_index(depth: int, arity: int) -> np.ndarray:
    """(slots in layers 1..depth-1, arity) flat indices of each slot's children."""
    inner = total_slots(depth - 1, arity)
    out = np.empty((inner, arity), dtype=np.int64)
    for k in range(1, depth):
        base, nxt = layer_offset(k, arity), layer_offset(k + 1, arity)
        for q in range(arity ** (k - 1)):
            out[base + q] = nxt + arity * q + np.arange(arity)
    out.setflags(write=False)
    return out


def _check_shape(depth: int, arity: int) -> None:
    if depth < 1:
        raise ValidationError(f"tree depth must be >= 1, got {depth}")
    if arity < 1:
        raise ValidationError(f"tree arity must be >= 1, got {arity}")


@dataclass(frozen=True, eq=False)
class TreeSubgraph:
    root: int
    depth: int
    arity: int
    nodes: np.ndarray
    mask: np.ndarray

    @property
    def slots(self) -> list[np.ndarray]:
        return [self.nodes[layer_offset(k, self.arity):layer_offset(k + 1, self.arity)]
                for k in range(1, self.depth + 1)]

    @property
    def layer_masks(self) -> list[np.ndarray]:
        return [self.mask[layer_offset(k, self.arity):layer_offset(k + 1, self.arity)]
                for k in range(1, self.depth + 1)]


@dataclass(frozen=True, eq=False)
class TreeBatch:
    """One tree per graph node, stacked as ``(n, slots)`` arrays."""

    nodes: np.ndarray
    mask: np.ndarray
    depth: int
    arity: int

    def __len__(self) -> int:
        return self.nodes.shape[0]

    def __getitem__(self, v: int) -> TreeSubgraph:
        return TreeSubgraph(v, self.depth, self.arity, self.nodes[v], self.mask[v])

    @property
    def trees(self) -> list[TreeSubgraph]:
        return [self[v] for v in range(len(self))]


def _fill(g: Graph, v: int, depth: int, arity: int) -> tuple[np.ndarray, np.ndarray]:
    n_slots = total_slots(depth, arity)
    nodes = np.full(n_slots, PAD, dtype=np.int64)
    parent = np.full(n_slots, PAD, dtype=np.int64)
    nodes[0] = v
    kids = child_index(depth, arity) if depth > 1 else np.empty((0, arity), dtype=np.int64)
    for s in range(kids.shape[0]):
        u = nodes[s]
        if u == PAD:
            continue
        ranked = g.rankings[u]
        ranked = ranked[ranked != parent[s]][:arity]
        nodes[kids[s, :ranked.size]] = ranked
        parent[kids[s]] = u
    return nodes, (nodes != PAD).astype(np.int8)


def extract_tree(g: Graph, v: int, depth: int, arity: int) -> TreeSubgraph:
    """Tree rooted at ``v``; each real slot's children are its top-ranked
    neighbours other than its own parent, padded when fewer than ``arity``."""
    _check_shape(depth, arity)
    if not 0 <= v < g.n:
        raise IndexError(f"node {v} out of range for graph with {g.n} nodes")
    nodes, mask = _fill(g, v, depth, arity)
    return TreeSubgraph(v, depth, arity, nodes, mask)


def extract_all(g: Graph, depth: int, arity: int) -> TreeBatch:
    _check_shape(depth, arity)
    filled = [_fill(g, v, depth, arity) for v in range(g.n)]
    n_slots = total_slots(depth, arity)
    nodes = np.array([f[0] for f in filled], dtype=np.int64).reshape(g.n, n_slots)
    mask = np.array([f[1] for f in filled], dtype=np.int8).reshape(g.n, n_slots)
    return TreeBatch(nodes, mask, depth, arity)


def tree_features(t: TreeSubgraph, g: Graph) -> np.ndarray:
    real = t.mask.astype(bool)
    if np.any(t.nodes[real] < 0) or np.any(t.nodes[real] >= g.n) or np.any(t.nodes[~real] != PAD):
        raise ConsistencyError(f"tree rooted at {t.root} references nodes outside the graph")
    out = np.zeros((t.nodes.size, g.features.shape[1]))
    out[real] = g.features[t.nodes[real]]
    return out


def batch_features(batch: TreeBatch, features: np.ndarray, ids) -> tuple[np.ndarray, np.ndarray]:
    """Slot features ``(len(ids), slots, C)`` and mask ``(len(ids), slots)``."""
    ids = np.asarray(ids, dtype=np.int64)
    nodes = batch.nodes[ids]
    mask = batch.mask[ids].astype(np.float64)
    x = features[np.where(nodes == PAD, 0, nodes)] * mask[..., None]
    return x, mask


def format_tree(t: TreeSubgraph) -> str:
    lines = []
    for k, layer in enumerate(t.slots, start=1):
        for q, u in enumerate(layer):
            label = "PAD" if u == PAD else str(int(u))
            lines.append(f"{'  ' * (k - 1)}{k} {q} {label}")
    return "\n".join(lines) + "\n"
