import json
import math

import numpy as np
import pytest

from creditgcn import layers as L
from creditgcn.errors import ShapeError, ValidationError
from creditgcn.graph import build_knn_graph, graph_from_adjacency
from creditgcn.numeric import activation, make_rng

from .conftest import random_connected_graph
from .gradient_cases import layer_errors, random_tree_batch
from .oracles import naive_tree_conv


def _p(w, b):
    return L.LayerParams(np.atleast_2d(np.asarray(w, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float)))


def test_tree_conv_scalar_example():
    x = np.array([[1.0], [1.0], [1.0]])
    out, mask = L.tree_conv(x, [1, 1, 1], _p([[1.0]], [0.0]), (2, 2), "identity")
    assert out.tolist() == [[3.0]]
    assert mask.tolist() == [1]


def test_tree_conv_zero_input_relu():
    out, _ = L.tree_conv(np.zeros((7, 2)), np.ones(7), _p(np.ones((2, 2)), [0, 0]), (3, 2), "relu")
    assert out.shape == (3, 2)
    assert np.all(out == 0)


def test_tree_conv_padded_child_contributes_nothing():
    x = np.array([[2.0], [3.0], [0.0]])
    out, _ = L.tree_conv(x, [1, 1, 0], _p([[1.0]], [0.0]), (2, 2), "identity")
    assert out[0, 0] == 5.0


def test_tree_conv_bias_inside_activation():
    x = np.array([[-1.0], [0.0]])
    out, _ = L.tree_conv(x, [1, 1], _p([[1.0]], [3.0]), (2, 1), "relu")
    assert out[0, 0] == 2.0  # relu(-1 + 0 + 3), not relu(-1) + 3


def test_tree_conv_errors():
    with pytest.raises(ValidationError):
        L.tree_conv(np.zeros((1, 2)), [1], _p(np.eye(2), [0, 0]), (1, 2))
    with pytest.raises(ShapeError):
        L.tree_conv(np.zeros((3, 2)), np.ones(3), _p(np.ones((3, 2)), [0, 0, 0]), (2, 2))


def test_tree_conv_matches_naive_oracle(rng):
    for _ in range(30):
        depth, arity, dim = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        x, mask = random_tree_batch(rng, 1, depth, arity, dim)
        W, b = rng.standard_normal((dim, dim)), rng.standard_normal(dim)
        f = ("relu", "tanh", "identity")[int(rng.integers(0, 3))]
        out, _ = L.tree_conv(x[0], mask[0], L.LayerParams(W, b), (depth, arity), f)
        ref = naive_tree_conv(x[0], mask[0], W, b, depth, arity, f)
        assert np.max(np.abs(out - ref)) < 1e-12


def test_tree_pool_examples():
    out, _ = L.tree_pool(np.array([[1.0], [4.0], [2.0]]), [1, 1, 1], (2, 2), "max")
    assert out[0, 0] == 4.0
    out, _ = L.tree_pool(np.array([[3.0], [1.0], [0.0]]), [1, 1, 0], (2, 2), "avg")
    assert out[0, 0] == 2.0
    for mode in ("max", "avg"):
        out, _ = L.tree_pool(np.array([[-7.0], [0.0], [0.0]]), [1, 0, 0], (2, 2), mode)
        assert out[0, 0] == -7.0


def test_tree_pool_max_dominates(rng):
    for _ in range(20):
        depth, arity = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        x, mask = random_tree_batch(rng, 3, depth, arity, 4)
        out, out_mask = L.tree_pool(x, mask, (depth, arity), "max")
        inner = out.shape[1]
        real = out_mask > 0
        assert np.all(out[real] >= x[:, :inner][real])


def test_tree_pool_errors():
    with pytest.raises(ValidationError):
        L.tree_pool(np.zeros((3, 1)), np.ones(3), (2, 2), "median")
    with pytest.raises(ValidationError):
        L.tree_pool(np.zeros((1, 1)), np.ones(1), (1, 2))


def test_global_gcn_single_node():
    g = build_knn_graph(np.array([[2.0, -1.0]]), 0)
    out = L.global_gcn(g, g.features, _p(np.eye(2), [0, 0]), "identity")
    np.testing.assert_array_equal(out, g.features)


def test_global_gcn_two_connected_nodes():
    g = graph_from_adjacency(np.array([[1.0], [1.0]]), np.array([[0, 1], [1, 0]]))
    np.testing.assert_allclose(g.norm_adjacency, 0.5, rtol=0, atol=1e-15)
    out = L.global_gcn(g, np.array([[2.0], [0.0]]), _p([[1.0]], [0.0]), "identity")
    np.testing.assert_allclose(out, [[1.0], [1.0]], rtol=0, atol=1e-15)


def test_global_gcn_zero_weights(rng):
    g = random_connected_graph(rng, 6)
    out = L.global_gcn(g, g.features, _p(np.zeros((3, 4)), np.zeros(3)), "identity")
    assert np.all(out == 0) and out.shape == (6, 3)


def test_global_gcn_shape_error(rng):
    g = random_connected_graph(rng, 6)
    with pytest.raises(ShapeError):
        L.global_gcn(g, np.zeros((5, 4)), _p(np.eye(4), np.zeros(4)))


def test_global_gcn_preserves_sqrt_degree_rows(rng):
    for _ in range(5):
        g = random_connected_graph(rng, int(rng.integers(3, 20)))
        v = np.sqrt(g.degree() + 1.0)
        h = np.outer(v, rng.standard_normal(3))
        out = L.global_gcn(g, h, _p(np.eye(3), np.zeros(3)), "identity")
        np.testing.assert_allclose(out, h, rtol=0, atol=1e-9)


def test_attention_zero_scores_average(rng):
    hl, hg = rng.standard_normal(4), rng.standard_normal(4)
    out, alpha = L.attention_fuse(hl, hg, L.AttentionParams(np.zeros(4), np.array([0.3])))
    np.testing.assert_array_equal(alpha, [0.5, 0.5])
    np.testing.assert_allclose(out, (hl + hg) / 2, rtol=0, atol=1e-15)


def test_attention_equal_branches(rng):
    h = rng.standard_normal(5)
    out, _ = L.attention_fuse(h, h.copy(), L.AttentionParams(rng.standard_normal(5), np.array([1.0])))
    np.testing.assert_allclose(out, h, rtol=0, atol=1e-15)


def test_attention_ln3_scores():
    # a . h_local = ln 3, a . h_global = 0
    out, alpha = L.attention_fuse([math.log(3.0)], [0.0], L.AttentionParams(np.array([1.0]), np.zeros(1)))
    np.testing.assert_allclose(alpha, [0.75, 0.25], rtol=0, atol=1e-15)


def test_attention_convexity(rng):
    for _ in range(50):
        hl, hg = rng.standard_normal((7, 3)) * 5, rng.standard_normal((7, 3)) * 5
        out, alpha = L.attention_fuse(hl, hg, L.AttentionParams(rng.standard_normal(3) * 3, np.zeros(1)))
        assert np.all(alpha >= 0)
        np.testing.assert_allclose(alpha.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(out, alpha[:, :1] * hl + alpha[:, 1:] * hg, rtol=0, atol=1e-12)


def test_attention_shape_error():
    with pytest.raises(ShapeError):
        L.attention_fuse(np.zeros(3), np.zeros(4), L.AttentionParams(np.zeros(3), np.zeros(1)))


def test_dense_examples():
    h = np.array([[1.0, -2.0]])
    np.testing.assert_array_equal(L.dense(h, _p(np.eye(2), [0, 0])), h)
    np.testing.assert_allclose(L.dense(np.zeros((1, 2)), _p(np.ones((1, 2)), [0.4]), "sigmoid"),
                               activation([[0.4]], "sigmoid"))
    assert L.dense(np.array([2.0, 3.0]), _p([[1.0, 1.0]], [-1.0])).tolist() == [4.0]
    with pytest.raises(ShapeError):
        L.dense(np.zeros(3), _p([[1.0, 1.0]], [0.0]))


def test_bce_examples():
    y = np.array([1.0, 0.0, 1.0])
    loss, _ = L.weighted_bce_loss(y, y, (1.0, 1.0))
    assert loss <= 1e-10
    loss, _ = L.weighted_bce_loss(np.full(4, 0.5), [0, 1, 1, 0], (1.0, 1.0))
    assert loss == pytest.approx(math.log(2.0), abs=1e-15)
    p = np.array([0.2, 0.7, 0.9])
    unweighted = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert L.weighted_bce_loss(p, y, (1.0, 1.0))[0] == pytest.approx(unweighted, rel=1e-15)
    with pytest.raises(ShapeError):
        L.weighted_bce_loss([0.5], [1, 0])


def test_bce_weights_rescale_classes():
    p, y = np.array([0.3, 0.6]), np.array([0.0, 1.0])
    loss, _ = L.weighted_bce_loss(p, y, (3.0, 1.0))
    assert loss == pytest.approx(-(3 * math.log(0.7) + math.log(0.6)) / 4)


@pytest.mark.parametrize("seed", range(10))
def test_layer_gradients(seed):
    errs = layer_errors(seed)
    bad = {k: v for k, v in errs.items() if not v < 1e-4}
    assert not bad


def test_params_json_round_trip_bit_exact(rng):
    params = {"a": L.init_layer(3, 4, rng), "att": L.init_attention(4, rng)}
    params["a"].b[:] = rng.standard_normal(4) / 3
    text = L.dumps_params(params, {"D": 3})
    back, doc = L.loads_params(text)
    assert doc["config"] == {"D": 3}
    for name in params:
        for (k, v), (k2, v2) in zip(params[name].arrays().items(), back[name].arrays().items()):
            assert k == k2 and v.tobytes() == v2.tobytes()
    assert json.loads(text)["params"]["a"]["W"]["shape"] == [4, 3]


def test_init_layer_range():
    p = L.init_layer(10, 20, make_rng(0))
    assert np.all(np.abs(p.W) <= math.sqrt(6 / 30)) and np.all(p.b == 0)
