"""
One tree convolution by hand
============================

A parent slot sums its own vector with the transformed vectors of its real
children, adds the bias and applies the activation.
"""

import numpy as np

from creditgcn import layers as L

# depth 2, arity 2: root plus two children, scalar features
x = np.array([[1.0], [2.0], [3.0]])
w = L.LayerParams(W=np.array([[0.5]]), b=np.array([0.25]))

out, mask = L.tree_conv(x, [1, 1, 1], w, (2, 2), "identity")
print("root output:", out[0, 0], "expected:", 1.0 + 0.5 * (2.0 + 3.0) + 0.25)

# a padded child adds nothing
out, _ = L.tree_conv(x, [1, 1, 0], w, (2, 2), "identity")
print("with the second child padded:", out[0, 0])

# pooling keeps the elementwise max over a parent and its children
pooled, _ = L.tree_pool(x, [1, 1, 1], (2, 2), "max")
print("max pool:", pooled[0, 0])

# attention mixes two branch embeddings with softmax weights
hl, hg = np.array([np.log(3.0)]), np.array([0.0])
fused, alpha = L.attention_fuse(hl, hg, L.AttentionParams(np.array([1.0]), np.zeros(1)))
print("alpha (local, global):", alpha)
