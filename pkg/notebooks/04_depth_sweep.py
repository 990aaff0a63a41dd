"""
Accuracy against tree depth
===========================

Sweep the tree depth D at fixed arity. D = 1 sees only the borrower's own
features; deeper trees bring in neighbours' features.
"""

from creditgcn import ModelConfig, SyntheticSpec, gen_synthetic
from creditgcn.evaluation import sweep_dm, sweep_to_csv

d = gen_synthetic(SyntheticSpec(n=300, relational_flip_prob=0.6, seed=0))
rows = sweep_dm(ModelConfig(fuse="subgraph_only", epochs=100), d, D_values=[1, 2, 3], m_values=[2, 3])

print(sweep_to_csv(rows))
for r in rows:
    print(f"D={r['D']} m={r['m']}  " + "#" * int(100 * r["accuracy"] - 60))
