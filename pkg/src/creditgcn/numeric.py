"""Dense float64 primitives shared by every layer.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Randomness
always goes through :func:`make_rng`, which pins the bit generator to PCG64
so seeded streams are identical on every platform.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError, ValidationError

ACTIVATIONS = ("relu", "identity", "sigmoid", "tanh")


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64-backed generator for ``seed``.

    PCG64 is a documented 128-bit-state permuted congruential generator; its
    output for a given seed does not depend on platform or numpy's default.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite values")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def conv2d_reference(image, kernel) -> np.ndarray:
    """Valid-mode 2-D convolution written as the explicit double sum.

    ``Y[m, n] = sum_{i, j in [-k//2, k//2]} X[m - i, n - j] * G[i, j]`` where
    the kernel is indexed from its centre and ``(m, n)`` ranges over the
    interior positions for which every ``X`` index is in range.
    """
    x = as_matrix(image, "image")
    g = as_matrix(kernel, "kernel")
    k = g.shape[0]
    if g.shape[1] != k:
        raise ValidationError(f"kernel must be square, got {g.shape}")
    if k % 2 == 0:
        raise ValidationError(f"kernel side must be odd, got {k}")
    h, w = x.shape
    if h < k or w < k:
        raise ShapeError(f"kernel {g.shape} larger than image {x.shape}")
    r = k // 2
    out = np.zeros((h - k + 1, w - k + 1))
    for m in range(r, h - r):
        for n in range(r, w - r):
            acc = 0.0
            for i in range(-r, r + 1):
                for j in range(-r, r + 1):
                    acc += x[m - i, n - j] * g[i + r, j + r]
            out[m - r, n - r] = acc
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(x, kind: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "identity":
        return x.copy()
    if kind == "sigmoid":
        return _sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    raise ValidationError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(pre: np.ndarray, out: np.ndarray, kind: str) -> np.ndarray:
    """Derivative of the activation, given its input ``pre`` and output ``out``."""
    if kind == "relu":
        return (pre > 0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(pre)
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "tanh":
        return 1.0 - out * out
    raise ValidationError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def sigmoid(x):
    return _sigmoid(np.atleast_1d(np.asarray(x, dtype=np.float64)))


def softmax(scores, axis: int = -1) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValidationError("softmax of an empty vector")
    z = s - np.max(s, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (``x`` is restored)."""
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        fp = float(f(x))
        x[idx] = orig - eps
        fm = float(f(x))
        x[idx] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at index {idx}")
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ShapeError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom))


def grad_check(f: Callable[[np.ndarray], float], x, analytic_grad, eps: float = 1e-5) -> float:
    """Max entrywise relative error between ``analytic_grad`` and central differences.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``. ``x`` is perturbed
    in place and restored, so ``f`` may close over it.
    """
    x = np.asarray(x, dtype=np.float64) if not isinstance(x, np.ndarray) else x
    num = numeric_gradient(f, x, eps)
    return relative_error(analytic_grad, num)
