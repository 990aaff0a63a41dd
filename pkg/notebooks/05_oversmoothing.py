"""
Over-smoothing
==============

Repeated propagation with the normalised adjacency drives every node's
embedding towards the same direction.
"""

import numpy as np

from creditgcn.evaluation import oversmoothing_probe
from creditgcn.graph import graph_from_adjacency
from creditgcn.numeric import make_rng

rng = make_rng(0)
n = 25
# ring plus a few random chords, so the graph is connected
a = np.zeros((n, n), dtype=np.int8)
for i in range(n):
    a[i, (i + 1) % n] = a[(i + 1) % n, i] = 1
for i, j in rng.integers(0, n, size=(10, 2)):
    if i != j:
        a[i, j] = a[j, i] = 1

g = graph_from_adjacency(rng.standard_normal((n, 6)), a)
sims = oversmoothing_probe(g, 32)
for t in (1, 2, 4, 8, 16, 32):
    print(f"step {t:>2}: mean pairwise cosine {sims[t - 1]:.4f}")

# the fixed direction: dominant eigenvector of the propagation matrix
vals, vecs = np.linalg.eigh(g.norm_adjacency)
v = vecs[:, -1]
print("largest eigenvalue:", round(float(vals[-1]), 12))
print("v proportional to sqrt(degree + 1):",
      np.allclose(np.abs(v) / np.linalg.norm(v),
                  np.sqrt(g.degree() + 1) / np.linalg.norm(np.sqrt(g.degree() + 1))))
