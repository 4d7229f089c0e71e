"""GNN forward/backward correctness, readout boundaries, and training."""

import numpy as np
import pytest

from uen.assembly import SampleGraph
from uen.gnn import (
    ARCHS,
    DivergenceError,
    GnnConfig,
    ModelParams,
    attention_weights,
    evaluate_loss,
    forward,
    init_params,
    load_model,
    loss_and_grads,
    predict,
    sample_loss_and_grads,
    save_history,
    save_model,
    train,
)


def make_graph(features, edges, label=0, sample_id="s"):
    return SampleGraph(
        node_order=tuple(f"n{i}" for i in range(len(features))),
        features=np.asarray(features, dtype=np.float64),
        edges=tuple(edges),
        label=label,
        sample_id=sample_id,
    )


def random_graph(rng, n_nodes, in_dim, label=None):
    feats = rng.normal(size=(n_nodes, in_dim))
    edges = [(rng.integers(0, i), i) for i in range(1, n_nodes)]  # random tree
    return make_graph(feats, edges,
                      label=int(rng.integers(2)) if label is None else label)


def make_params(arch, in_dim=6, hidden=5, layers=2, lam=0.5, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    cfg = GnnConfig(arch=arch, layers=layers, hidden=hidden, lam=lam)
    return init_params(cfg, in_dim, rng)


def flatten(params):
    return np.concatenate([params.tensors[k].reshape(-1) for k in params.names()])


def set_flat(params, vec):
    offset = 0
    for k in params.names():
        t = params.tensors[k]
        t[...] = vec[offset: offset + t.size].reshape(t.shape)
        offset += t.size


# ---------------------------------------------------------------------------
# readout boundaries


def readout_logits(params, h):
    """Recompute the lambda-mix readout and head from final node embeddings."""
    pooled = params.lam * h[0] + (1.0 - params.lam) * h[1:].mean(axis=0)
    return params.tensors["cls.W"] @ pooled + params.tensors["cls.b"]


@pytest.mark.parametrize("arch", ARCHS)
def test_lambda_one_readout_ignores_comment_embeddings(arch):
    rng = np.random.Generator(np.random.PCG64(1))
    params = make_params(arch, lam=1.0, seed=2)
    g = random_graph(rng, 5, 6)
    h, logits = forward(params, g)
    assert np.allclose(readout_logits(params, h), logits)
    perturbed = h.copy()
    perturbed[1:] += rng.normal(size=perturbed[1:].shape)
    assert np.max(np.abs(readout_logits(params, perturbed) - logits)) <= 1e-6


@pytest.mark.parametrize("arch", ARCHS)
def test_lambda_one_pooled_is_post_row(arch):
    rng = np.random.Generator(np.random.PCG64(3))
    params = make_params(arch, lam=1.0)
    g = random_graph(rng, 6, 6)
    cache = {}
    h, _ = forward(params, g, cache)
    assert np.array_equal(cache["pooled"], h[0])


@pytest.mark.parametrize("arch", ARCHS)
def test_lambda_zero_identical_comments_pool_exactly(arch):
    params = make_params(arch, lam=0.0)
    # two comments attached symmetrically to the post with equal features
    feats = np.zeros((3, 6))
    feats[0] = np.arange(6)
    feats[1] = feats[2] = np.arange(6)[::-1] * 0.5
    g = make_graph(feats, [(0, 1), (0, 2)])
    cache = {}
    h, _ = forward(params, g, cache)
    assert np.array_equal(h[1], h[2])
    assert np.array_equal(cache["pooled"], h[1])


def test_gcn_single_layer_matches_hand_computation():
    # 3-node path; identity weights isolate the propagation operator
    feats = np.array([[1.0, 0.0, 2.0], [0.0, 3.0, 0.0], [4.0, 0.0, 1.0]])
    g = make_graph(feats, [(0, 1), (1, 2)])
    params = ModelParams(
        "gcn", 0.5, 3, 3, 1,
        {"layer0.W": np.eye(3), "cls.W": np.zeros((2, 3)), "cls.b": np.zeros(2)},
    )
    h, _ = forward(params, g)
    a_hat = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
    d = a_hat.sum(axis=1)
    prop = a_hat / np.sqrt(np.outer(d, d))
    assert np.allclose(h, np.maximum(prop @ feats, 0.0))


# ---------------------------------------------------------------------------
# loss and gradients


def test_uniform_logits_loss_is_ln2():
    params = make_params("gcn")
    for k in params.tensors:
        params.tensors[k][...] = 0.0
    g = random_graph(np.random.Generator(np.random.PCG64(0)), 4, 6, label=0)
    loss, _ = sample_loss_and_grads(params, g)
    assert loss == pytest.approx(np.log(2.0))


@pytest.mark.parametrize("arch", ARCHS)
def test_gradients_match_finite_differences(arch):
    rng = np.random.Generator(np.random.PCG64(7))
    params = make_params(arch, in_dim=5, hidden=4, layers=2, lam=0.4)
    g = random_graph(rng, 5, 5, label=1)
    _, grads = sample_loss_and_grads(params, g)
    analytic = flatten(grads)
    theta = flatten(params)
    h = 1e-4
    numeric = np.zeros_like(theta)
    probe = make_params(arch, in_dim=5, hidden=4, layers=2, lam=0.4)
    for i in range(len(theta)):
        for sign, slot in ((1.0, 0), (-1.0, 1)):
            t = theta.copy()
            t[i] += sign * h
            set_flat(probe, t)
            loss, _ = sample_loss_and_grads(probe, g)
            numeric[i] += sign * loss
    numeric /= 2 * h
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    assert np.max(rel) < 1e-3


def test_duplicated_sample_batch_keeps_loss():
    rng = np.random.Generator(np.random.PCG64(9))
    params = make_params("sage")
    g = random_graph(rng, 4, 6, label=0)
    single, _ = loss_and_grads(params, [g])
    doubled, _ = loss_and_grads(params, [g, g])
    assert doubled == pytest.approx(single)


def test_unlabeled_sample_rejected():
    params = make_params("gcn")
    g = make_graph(np.zeros((2, 6)), [(0, 1)], label=None)
    with pytest.raises(ValueError, match="unlabeled"):
        sample_loss_and_grads(params, g)


@pytest.mark.parametrize("arch", ARCHS)
def test_permutation_equivariance(arch):
    rng = np.random.Generator(np.random.PCG64(11))
    params = make_params(arch)
    g = random_graph(rng, 6, 6)
    _, logits = forward(params, g)
    # permute comment nodes (post stays node 0), relabel edges
    perm = [0] + list(1 + rng.permutation(5))
    inv = np.argsort(perm)
    feats = g.features[perm]
    edges = [(int(inv[i]), int(inv[j])) for i, j in g.edges]
    _, logits_p = forward(params, make_graph(feats, edges, label=g.label))
    assert np.allclose(logits, logits_p, atol=1e-6)


def test_gat_attention_rows_sum_to_one():
    rng = np.random.Generator(np.random.PCG64(13))
    params = make_params("gat")
    g = random_graph(rng, 6, 6)
    for layer in range(params.layers):
        alpha = attention_weights(params, g, layer)
        assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-6)
        # attention is confined to the neighborhood plus self
        mask = np.eye(6, dtype=bool)
        for i, j in g.edges:
            mask[i, j] = mask[j, i] = True
        assert np.all(alpha[~mask] == 0.0)


def test_forward_reports_nan():
    params = make_params("gcn")
    g = make_graph(np.full((3, 6), np.nan), [(0, 1), (0, 2)])
    with pytest.raises(DivergenceError, match="layer 0"):
        forward(params, g)


# ---------------------------------------------------------------------------
# prediction and training


def test_predict_examples():
    # zero weights and a fixed bias pin the logits exactly
    def pinned(logit0, logit1):
        return ModelParams("gcn", 1.0, 2, 2, 1, {
            "layer0.W": np.zeros((2, 2)), "cls.W": np.zeros((2, 2)),
            "cls.b": np.array([logit0, logit1])})

    g = make_graph([[1.0, 0.0], [0.0, 0.0]], [(0, 1)])
    label, prob = predict(pinned(2.0, -2.0), g)
    assert label == 0
    assert prob == pytest.approx(1 / (1 + np.exp(-4.0)))
    label, prob = predict(pinned(0.0, 0.0), g)
    assert label == 1
    assert prob == pytest.approx(0.5)


def separable_graphs(rng, n, in_dim=6):
    graphs = []
    for i in range(n):
        label = i % 2
        base = np.ones(in_dim) if label else -np.ones(in_dim)
        feats = base + 0.1 * rng.normal(size=(3, in_dim))
        graphs.append(make_graph(feats, [(0, 1), (0, 2)], label=label,
                                 sample_id=f"s{i}"))
    return graphs


def test_training_learns_separable_data():
    rng = np.random.Generator(np.random.PCG64(17))
    graphs = separable_graphs(rng, 200)
    cfg = GnnConfig(arch="gcn", lam=0.5, epochs=8, seed=0)
    model, history = train(graphs[:160], graphs[160:], cfg, in_dim=6)
    losses = [h["train_loss"] for h in history]
    assert all(losses[i + 1] < losses[i] for i in range(4))
    _, acc = evaluate_loss(model, graphs[:160])
    assert acc >= 0.95


def test_training_deterministic_history():
    rng = np.random.Generator(np.random.PCG64(19))
    graphs = separable_graphs(rng, 60)
    cfg = GnnConfig(arch="sage", lam=0.3, epochs=3, seed=5)
    _, h1 = train(graphs[:48], graphs[48:], cfg, in_dim=6)
    _, h2 = train(graphs[:48], graphs[48:], cfg, in_dim=6)
    assert h1 == h2


def test_training_with_paper_lambda_completes():
    rng = np.random.Generator(np.random.PCG64(23))
    graphs = separable_graphs(rng, 40)
    cfg = GnnConfig(arch="gcn", lam=0.62, epochs=2, seed=0)
    model, history = train(graphs[:32], graphs[32:], cfg, in_dim=6)
    assert len(history) == 2
    for t in model.tensors.values():
        assert np.all(np.isfinite(t))


def test_divergence_carries_history():
    rng = np.random.Generator(np.random.PCG64(29))
    graphs = separable_graphs(rng, 20)
    cfg = GnnConfig(arch="gcn", lam=0.5, epochs=3, seed=0)
    # a non-finite feature poisons the forward pass mid-training
    bad = graphs[3].features.copy()
    bad[1, 2] = np.inf
    graphs[3] = make_graph(bad, graphs[3].edges, label=graphs[3].label)
    with np.errstate(invalid="ignore"), pytest.raises(DivergenceError) as exc:
        train(graphs[:16], graphs[16:], cfg, in_dim=6)
    assert isinstance(exc.value.history, list)


def test_model_save_load_round_trip(tmp_path):
    rng = np.random.Generator(np.random.PCG64(31))
    params = make_params("gat", in_dim=6, hidden=4, layers=2, lam=0.7)
    g = random_graph(rng, 5, 6)
    path = tmp_path / "model.mdl"
    save_model(params, path)
    loaded = load_model(path)
    assert loaded.arch == "gat" and loaded.lam == 0.7
    assert loaded.names() == params.names()
    _, logits_a = forward(params, g)
    _, logits_b = forward(loaded, g)
    assert np.allclose(logits_a, logits_b, atol=1e-4)  # float32 checkpoint
    # a second save of the loaded model is byte-identical
    path2 = tmp_path / "model2.mdl"
    save_model(loaded, path2)
    save_model(load_model(path2), tmp_path / "model3.mdl")
    assert (tmp_path / "model2.mdl").read_bytes() == (tmp_path / "model3.mdl").read_bytes()


def test_model_load_rejects_corruption(tmp_path):
    from uen.embedding import FormatError

    params = make_params("gcn")
    path = tmp_path / "model.mdl"
    save_model(params, path)
    raw = bytearray(path.read_bytes())
    raw[-2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="checksum"):
        load_model(path)


def test_history_csv(tmp_path):
    history = [{"epoch": 0, "train_loss": 0.5, "val_loss": 0.6, "val_acc": 0.7}]
    path = tmp_path / "history.csv"
    save_history(history, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,val_acc"
    assert lines[1] == "0,0.5,0.6,0.7"


def test_config_validation():
    with pytest.raises(ValueError):
        GnnConfig(arch="mlp")
    with pytest.raises(ValueError):
        GnnConfig(lam=1.5)
