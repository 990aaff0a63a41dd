"""Borrower graph from feature similarity.

Every node picks its ``m`` most cosine-similar other nodes; the union of
those selections gives the undirected binary adjacency. The global branch
propagates through ``D^-1/2 (A + I) D^-1/2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"vectors have different lengths: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def similarity_matrix(features) -> np.ndarray:
    """All-pairs cosine similarity; rows with zero norm are similar to nothing."""
    x = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    u = x / safe[:, None]
    return np.clip(u @ u.T, -1.0, 1.0)


def _rank(sim_row: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    # descending similarity, ties to the lower index
    order = np.lexsort((candidates, -sim_row[candidates]))
    return candidates[order]


def top_m_selection(sim: np.ndarray, m: int) -> np.ndarray:
    """(n, m) array: row i lists the m nodes most similar to i, self excluded."""
    n = sim.shape[0]
    if m < 0:
        raise ValidationError(f"m must be non-negative, got {m}")
    if m >= n:
        raise ValidationError(f"m={m} must be smaller than the node count {n}")
    out = np.empty((n, m), dtype=np.int64)
    everyone = np.arange(n)
    for i in range(n):
        others = np.delete(everyone, i)
        out[i] = _rank(sim[i], others)[:m]
    return out


def normalized_adjacency(adjacency) -> np.ndarray:
    a = np.asarray(adjacency, dtype=np.float64)
    a_tilde = a + np.eye(a.shape[0])
    d = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]


@dataclass(eq=False)
class Graph:
    features: np.ndarray
    adjacency: np.ndarray
    norm_adjacency: np.ndarray
    similarity: np.ndarray
    m: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edges(self) -> list[tuple[int, int]]:
        src, dst = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(src.tolist(), dst.tolist()))

    @cached_property
    def rankings(self) -> list[np.ndarray]:
        """Adjacent nodes of every vertex in descending similarity order."""
        return [_rank(self.similarity[v], np.flatnonzero(self.adjacency[v])) for v in range(self.n)]


def graph_from_adjacency(features, adjacency, similarity=None, m: int = 0) -> Graph:
    """Wrap an existing symmetric 0/1 adjacency; similarity defaults to cosine."""
    x = np.asarray(features, dtype=np.float64)
    a = np.asarray(adjacency, dtype=np.int8)
    if a.shape != (x.shape[0], x.shape[0]):
        raise ShapeError(f"adjacency {a.shape} does not match {x.shape[0]} nodes")
    if not np.array_equal(a, a.T) or np.any(np.diag(a)):
        raise ValidationError("adjacency must be symmetric with zero diagonal")
    sim = similarity_matrix(x) if similarity is None else np.asarray(similarity, dtype=np.float64)
    return Graph(x, a, normalized_adjacency(a), sim, m)


def build_knn_graph(data, m: int) -> Graph:
    """Top-``m`` cosine-similarity graph, symmetrized by union.

    ``data`` is a :class:`~creditgcn.data.Dataset` or a feature matrix.
    """
    x = np.asarray(getattr(data, "features", data), dtype=np.float64)
    n = x.shape[0]
    sim = similarity_matrix(x)
    chosen = top_m_selection(sim, m)
    a = np.zeros((n, n), dtype=np.int8)
    rows = np.repeat(np.arange(n), m)
    a[rows, chosen.ravel()] = 1
    a = np.maximum(a, a.T)
    return Graph(x, a, normalized_adjacency(a), sim, m)


def neighbor_ranking(g: Graph, v: int) -> list[tuple[int, float]]:
    if not 0 <= v < g.n:
        raise IndexError(f"node {v} out of range for graph with {g.n} nodes")
    return [(int(u), float(g.similarity[v, u])) for u in g.rankings[v]]


def export_edges(g: Graph, path, config: dict | None = None) -> None:
    """Write ``src,dst`` lines (each undirected edge once) plus a JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for s, d in g.edges():
            fh.write(f"{s},{d}\n")
    sidecar = {"n": g.n, "m": g.m, "edges": len(g.edges()), "config": config or {}}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
