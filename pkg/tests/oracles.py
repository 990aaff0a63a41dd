"""Independent slow reference implementations used as test oracles."""

import numpy as np

from creditgcn.numeric import activation


def naive_tree_conv(x_flat, mask_flat, W, b, depth, arity, f):
    """Slot-by-slot evaluation of the tree convolution with explicit (p, q) indexing."""
    layers, masks, start = [], [], 0
    for k in range(1, depth + 1):
        size = arity ** (k - 1)
        layers.append(x_flat[start:start + size])
        masks.append(mask_flat[start:start + size])
        start += size
    out = []
    for p in range(depth - 1):
        for q in range(arity ** p):
            if not masks[p][q]:
                out.append([0.0] * W.shape[0])
                continue
            acc = [float(layers[p][q][o]) + float(b[o]) for o in range(W.shape[0])]
            for j in range(arity * q, arity * q + arity):
                if masks[p + 1][j]:
                    for o in range(W.shape[0]):
                        acc[o] += sum(float(W[o, i]) * float(layers[p + 1][j][i]) for i in range(W.shape[1]))
            out.append(list(activation(np.array(acc), f)))
    return np.array(out)


def brute_force_counts(pred, truth, pos=1):
    tp = fp = tn = fn = 0
    for p, t in zip(pred, truth):
        if p == pos and t == pos:
            tp += 1
        elif p == pos:
            fp += 1
        elif t == pos:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def power_iteration(a, iters=5000, tol=1e-15):
    v = np.ones(a.shape[0]) / np.sqrt(a.shape[0])
    for _ in range(iters):
        w = a @ v
        w /= np.linalg.norm(w)
        if np.max(np.abs(w - v)) < tol:
            return w
        v = w
    return v
