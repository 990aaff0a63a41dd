"""
Borrower graphs and tree subgraphs
==================================

Build a cosine-similarity kNN graph over a small synthetic borrower table,
then unroll each node into a full m-ary tree of its most similar neighbours.
"""

import numpy as np

from creditgcn import SyntheticSpec, build_knn_graph, extract_all, extract_tree, gen_synthetic, normalize
from creditgcn.trees import format_tree

# 30 borrowers, 5 non-default per default
d = gen_synthetic(SyntheticSpec(n=30, feature_dim=4, seed=2))
print("class counts (default, non-default):", d.class_counts())

# z-score first so no single column dominates the cosine similarity
full, _ = normalize(d)
g = build_knn_graph(full, m=2)
print("nodes:", g.n, "edges:", len(g.edges()))
print("degree of the first five nodes:", g.degree()[:5])

# a depth-3 binary tree: 1 + 2 + 4 slots
tree = extract_tree(g, 0, depth=3, arity=2)
print(format_tree(tree))

# trees for every node at once, stored as a (n, slots) id matrix
batch = extract_all(g, depth=3, arity=2)
print("batch ids:", batch.nodes.shape, "padded slots:", int(np.sum(batch.mask == 0)))
