import numpy as np
import pytest

from creditgcn import layers as L
from creditgcn.errors import TrainingError, ValidationError
from creditgcn.graph import build_knn_graph
from creditgcn.model import (ModelConfig, TrainedModel, default_pattern, forward, init_model, predict,
                             train)
from creditgcn.numeric import make_rng
from creditgcn.trees import extract_all

from .gradient_cases import end_to_end_error


@pytest.fixture
def toy():
    """20 linearly separable nodes: the label is the sign of the first feature."""
    rng = make_rng(5)
    x = rng.standard_normal((20, 3))
    x[:, 0] = np.where(np.arange(20) % 2 == 0, 1.5, -1.5) + 0.1 * rng.standard_normal(20)
    y = (x[:, 0] > 0).astype(int)
    g = build_knn_graph(x, 2)
    return g, extract_all(g, 3, 2), y


def test_default_pattern():
    assert default_pattern(1) == ""
    assert default_pattern(3) == "cp"
    assert default_pattern(4) == "cpc"


@pytest.mark.parametrize("kw", [{"D": 0}, {"conv_pool_pattern": "c"}, {"conv_pool_pattern": "cx"},
                                {"lr": 0.0}, {"fuse": "both"}, {"imbalance_mode": "smote"},
                                {"hidden_dims": ()}, {"epochs": -1}, {"batch": 0}])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        ModelConfig(**kw).validate()


def test_zero_head_gives_half(toy):
    g, trees, _ = toy
    for fuse in ("subgraph_only", "hybrid"):
        model = init_model(ModelConfig(D=3, m=2, fuse=fuse), 3)
        model.params["out"].W[:] = 0.0
        np.testing.assert_array_equal(forward(model, g, trees), np.full(20, 0.5))


def test_hybrid_identical_branches_independent_of_alpha(toy):
    g, trees, _ = toy
    model = init_model(ModelConfig(D=3, m=2, fuse="hybrid"), 3)
    base = forward(model, g, trees)
    model.params["attention"].a[:] = 0.0
    # with equal branch embeddings any alpha gives the same mix
    from creditgcn.model import _forward
    logits, alpha, caches = _forward(model, g.features, g.norm_adjacency, trees, np.arange(20))
    hl = caches["attention"][0]
    out, _ = L.attention_fuse(hl, hl.copy(), L.AttentionParams(np.ones(hl.shape[1]), np.zeros(1)))
    np.testing.assert_allclose(out, hl, rtol=0, atol=1e-15)
    assert base.shape == (20,)


def test_probabilities_in_open_interval(toy):
    g, trees, _ = toy
    rng = make_rng(0)
    for fuse in ("subgraph_only", "hybrid"):
        model = init_model(ModelConfig(D=3, m=2, fuse=fuse), 3)
        for p in model.params.values():
            for a in p.arrays().values():
                a[...] = rng.standard_normal(a.shape)
        probs = forward(model, g, trees)
        assert np.all((probs > 0) & (probs < 1))


def test_forward_config_tree_mismatch(toy):
    g, _, _ = toy
    model = init_model(ModelConfig(D=3, m=2), 3)
    with pytest.raises(ValidationError):
        forward(model, g, extract_all(g, 2, 2))


@pytest.mark.parametrize("fuse", ["subgraph_only", "hybrid"])
def test_training_reduces_loss(toy, fuse):
    g, trees, y = toy
    model = train(ModelConfig(D=3, m=2, fuse=fuse, epochs=60, lr=0.1), g, trees, y, np.arange(20))
    assert len(model.history) == 60
    assert model.history[-1] < model.history[0]
    assert all(np.all(np.isfinite(a)) for p in model.params.values() for a in p.arrays().values())


def test_training_is_deterministic(toy):
    g, trees, y = toy
    cfg = ModelConfig(D=3, m=2, epochs=15, seed=3, batch=7)
    a = train(cfg, g, trees, y, np.arange(14), np.arange(14, 20))
    b = train(cfg, g, trees, y, np.arange(14), np.arange(14, 20))
    assert a.to_json() == b.to_json()
    assert a.history == b.history and len(a.val_history) == 15


def test_zero_epochs_returns_initialization(toy):
    g, trees, y = toy
    cfg = ModelConfig(D=3, m=2, epochs=0, seed=4)
    assert train(cfg, g, trees, y, np.arange(20)).to_json() == init_model(cfg, 3).to_json()


def test_train_validation_errors(toy):
    g, trees, y = toy
    with pytest.raises(ValidationError):
        train(ModelConfig(D=3, m=2, epochs=1), g, trees, y, np.arange(10), np.arange(5, 15))
    with pytest.raises(ValidationError):
        train(ModelConfig(D=3, m=2, epochs=1), g, trees, np.ones(20, dtype=int), np.arange(20))


def test_divergence_names_epoch(toy):
    g, trees, y = toy
    with pytest.raises(TrainingError) as err:
        train(ModelConfig(D=3, m=2, epochs=50, lr=1e300, imbalance_mode="none"), g, trees, y, np.arange(20))
    assert "epoch" in str(err.value)


def test_oversample_mode_trains(toy):
    g, trees, y = toy
    ids = np.flatnonzero(np.arange(20) < 14)
    model = train(ModelConfig(D=3, m=2, epochs=5, imbalance_mode="oversample"), g, trees, y, ids)
    assert len(model.history) == 5


def test_predict_threshold_rules(toy):
    g, trees, _ = toy
    model = init_model(ModelConfig(D=3, m=2), 3)
    model.params["out"].W[:] = 0.0
    assert np.all(predict(model, g, trees, 0.5) == 1)
    assert np.all(predict(model, g, trees, 0.999) == 0)
    with pytest.raises(ValidationError):
        predict(model, g, trees, 1.0)


def test_predict_monotone_in_threshold(toy):
    g, trees, y = toy
    model = train(ModelConfig(D=3, m=2, epochs=20), g, trees, y, np.arange(20))
    prev = predict(model, g, trees, 0.05)
    for t in np.linspace(0.1, 0.95, 12):
        cur = predict(model, g, trees, t)
        assert np.all(cur <= prev)
        prev = cur


def test_save_load_reproduces_predictions(tmp_path, toy):
    g, trees, y = toy
    model = train(ModelConfig(D=3, m=2, epochs=10), g, trees, y, np.arange(20))
    path = tmp_path / "m.json"
    model.save(path)
    back = TrainedModel.load(path)
    assert forward(back, g, trees).tobytes() == forward(model, g, trees).tobytes()
    assert back.history == model.history and back.config == model.config


def _copy_shared(src, dst):
    for name, p in dst.params.items():
        for a, b in zip(p.arrays().values(), src.params[name].arrays().values()):
            a[...] = b


def test_hybrid_with_alpha_local_one_equals_subgraph(toy):
    g, trees, y = toy
    hyb = train(ModelConfig(D=3, m=2, fuse="hybrid", epochs=10), g, trees, y, np.arange(20))
    sub = init_model(ModelConfig(D=3, m=2, fuse="subgraph_only"), 3)
    _copy_shared(hyb, sub)
    a = forward(hyb, g, trees, force_alpha_local=1.0)
    b = forward(sub, g, trees)
    assert np.max(np.abs(a - b)) <= 1e-12


@pytest.mark.parametrize("fuse", ["subgraph_only", "hybrid"])
@pytest.mark.parametrize("pattern, depth", [(None, 2), ("p", 2), ("cp", 3)])
def test_end_to_end_gradients(fuse, pattern, depth):
    assert end_to_end_error(0, fuse, pattern, depth) < 1e-3
