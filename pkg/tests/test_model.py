import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coin.augment import AugmentedDataset
from coin.errors import DimensionMismatchError, InvalidParameterError
from coin.graph import SignedGraph, build_signed_graph
from coin.model import (
    EmbeddingNetwork,
    TrainConfig,
    TrainedModel,
    classification_loss,
    forward,
    gradients,
    graph_loss,
    graph_loss_grad,
    load_checkpoint,
    objective,
    predict,
    save_checkpoint,
    save_history,
    softmax,
    total_loss,
    train,
)


def _random_instance(seed, n=12):
    """Small net 2 -> 8 -> 4 -> 2 with a random signed graph over ``n`` points."""
    rng = np.random.default_rng(seed)
    net = EmbeddingNetwork(2, (8, 4), 2, seed=seed)
    X = rng.normal(size=(n, 2))
    labels = rng.integers(0, 2, size=n)
    kind = np.array(["orig"] * (n - 4) + ["pos"] * 2 + ["neg"] * 2, dtype=object)
    edges = []
    for i in range(n - 2):
        for j in rng.choice(n, size=3, replace=False):
            if j != i:
                edges.append((i, int(j), int(rng.choice([-1, 1]))))
    aug = AugmentedDataset(X, labels, kind, np.full(n, -1), np.full(n, -1))
    return net, aug, np.array(edges)


def _central_differences(net, aug, edges, lam, margin, step=1e-5):
    batch = np.arange(aug.n_nodes)
    theta = net.theta.copy()
    out = np.zeros_like(theta)
    for k in range(len(theta)):
        for sign in (1, -1):
            net.theta[:] = theta
            net.theta[k] += sign * step
            J = objective(net, batch, aug.X, aug.labels, aug.kind, edges, lam, margin, with_grad=False)[2]
            out[k] += sign * J
    net.theta[:] = theta
    return out / (2 * step)


def test_zero_weights_give_uniform_probabilities():
    net = EmbeddingNetwork(3, (4,), 2)
    net.set_params(np.zeros_like(net.theta))
    _, p = forward(net, np.array([[1.0, -2.0, 0.5]]))
    np.testing.assert_array_equal(p, [[0.5, 0.5]])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_probabilities_normalised(seed):
    rng = np.random.default_rng(seed)
    net = EmbeddingNetwork(3, (5, 4), 3, seed=seed)
    h, p = net.forward(rng.normal(scale=10, size=(7, 3)))
    assert np.all(p > 0) and np.all(np.isfinite(h))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_softmax_shift_invariance():
    logits = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_allclose(softmax(logits), softmax(logits + 123.4), atol=1e-15)
    net = EmbeddingNetwork(2, (4,), 2, seed=1)
    X = np.random.default_rng(1).normal(size=(6, 2))
    before = predict(net, X)[0]
    net.biases[-1][:] += 7.0
    np.testing.assert_array_equal(predict(net, X)[0], before)


def test_forward_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        EmbeddingNetwork(2).forward(np.zeros((1, 3)))


def _latents_with_sq_dist(d):
    return np.array([[0.0, 0.0], [math.sqrt(d), 0.0]])


def test_graph_loss_examples():
    h = np.ones((2, 3))
    assert graph_loss(h, [(0, 1, 1)], 1.0) == 0.0
    assert graph_loss(_latents_with_sq_dist(1.5), [(0, 1, -1)], 1.0) == 0.0
    latents = np.vstack([_latents_with_sq_dist(0.3), _latents_with_sq_dist(0.2)])
    loss = graph_loss(latents, [(0, 1, 1), (2, 3, -1)], 1.0)
    assert loss == pytest.approx(0.55, abs=1e-12)


def test_graph_loss_index_mismatch():
    with pytest.raises(DimensionMismatchError):
        graph_loss(np.zeros((2, 2)), [(0, 5, 1)], 1.0)


def test_zero_margin_silences_negative_edges():
    rng = np.random.default_rng(2)
    h = rng.normal(size=(6, 3))
    edges = [(0, 1, -1), (2, 3, -1), (4, 5, -1)]
    assert graph_loss(h, edges, 1e-300) == 0.0


@pytest.mark.parametrize(
    "probs, label, expected",
    [((0.5, 0.5), 0, math.log(2)), ((0.5, 0.5), 1, math.log(2)), ((0.25, 0.75), 1, -math.log(0.75))],
)
def test_classification_loss_examples(probs, label, expected):
    assert classification_loss([probs], [label]) == pytest.approx(expected, abs=1e-12)


def test_classification_loss_clamped_certain():
    assert abs(classification_loss([(0.0, 1.0)], [1])) <= 1e-11
    assert classification_loss([(0.0, 1.0)], [0]) == pytest.approx(-math.log(1e-12))


def test_classification_loss_empty():
    with pytest.raises(InvalidParameterError):
        classification_loss(np.empty((0, 2)), [])


def test_total_loss():
    assert total_loss(0.5, 0.2, 0.0) == 0.5
    assert total_loss(0.5, 0.2, 1.0) == pytest.approx(0.7)
    with pytest.raises(InvalidParameterError):
        total_loss(0.5, 0.2, -1.0)


def test_positive_edge_latent_gradient():
    h = np.array([[1.0, 2.0], [0.5, -1.0]])
    _, grad = graph_loss_grad(h, [(0, 1, 1)], 1.0)
    np.testing.assert_allclose(grad[0], 2 * (h[0] - h[1]))
    np.testing.assert_allclose(grad[1], -2 * (h[0] - h[1]))


def test_negative_edge_beyond_margin_has_no_gradient():
    _, grad = graph_loss_grad(_latents_with_sq_dist(1.5), [(0, 1, -1)], 1.0)
    assert np.all(grad == 0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_central_differences(seed):
    net, aug, edges = _random_instance(seed)
    analytic = objective(net, np.arange(aug.n_nodes), aug.X, aug.labels, aug.kind, edges, 1.0, 1.0)[3]
    numeric = _central_differences(net, aug, edges, 1.0, 1.0)
    assert np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))) <= 1e-5


def test_gradients_restrict_to_batch():
    net, aug, edges = _random_instance(7)
    graph = SignedGraph(aug.n_nodes, edges[np.argsort(edges[:, 0], kind="stable")], aug.kind != "neg")
    batch = np.arange(6)
    g = gradients(net, batch, aug, graph, TrainConfig(hidden_layer_sizes=(8, 4), reg_lambda=1.0))
    sub = AugmentedDataset(aug.X[batch], aug.labels[batch], aug.kind[batch], np.full(6, -1), np.full(6, -1))
    inner = graph.edges[np.all(graph.edges[:, :2] < 6, axis=1)]
    expected = objective(net, batch, sub.X, sub.labels, sub.kind, inner, 1.0, 1.0)[3]
    np.testing.assert_allclose(g, expected, atol=1e-14)


def test_objective_affine_in_lambda():
    net, aug, edges = _random_instance(3)
    batch = np.arange(aug.n_nodes)
    J1 = objective(net, batch, aug.X, aug.labels, aug.kind, edges, 0.3, 1.0, with_grad=False)
    J2 = objective(net, batch, aug.X, aug.labels, aug.kind, edges, 2.5, 1.0, with_grad=False)
    assert J2[2] - J1[2] == pytest.approx((2.5 - 0.3) * J1[1], abs=1e-12)


def _single_edge_step(sign, margin):
    rng = np.random.default_rng(4)
    net = EmbeddingNetwork(2, (6, 3), 2, seed=4)
    X = rng.normal(size=(2, 2))
    labels = np.array([0, 1])
    kind = np.array(["neg", "neg"], dtype=object)  # no cross-entropy: isolate the graph term
    edges = np.array([(0, 1, sign)])
    h = net.forward(X)[0]
    before = np.sum((h[0] - h[1]) ** 2)
    grad = objective(net, np.arange(2), X, labels, kind, edges, 1.0, margin)[3]
    net.theta -= 1e-3 * grad
    h = net.forward(X)[0]
    return before, np.sum((h[0] - h[1]) ** 2)


def test_attraction_and_repulsion_direction():
    before, after = _single_edge_step(1, 1.0)
    assert after < before
    before, after = _single_edge_step(-1, 1e3)
    assert after > before


def _blobs(seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-2, 0.5, size=(30, 2)), rng.normal(2, 0.5, size=(30, 2))])
    y = np.repeat([0, 1], 30)
    return AugmentedDataset.from_originals(X, y)


def test_separable_blobs_reach_full_training_accuracy():
    aug = _blobs()
    # a linear oracle separates these blobs: the midpoint hyperplane x0 + x1 = 0
    assert np.all((aug.X.sum(axis=1) > 0) == (aug.labels == 1))
    graph = build_signed_graph(aug, 0, 0)
    cfg = TrainConfig(hidden_layer_sizes=(8, 4), reg_lambda=0.0, epochs=100, batch_size=16)
    model = train(EmbeddingNetwork(2, (8, 4), 2, seed=0), aug, graph, cfg)
    assert np.all(model.predict(aug.X) == aug.labels)


def test_zero_epochs_keeps_initialisation():
    aug = _blobs()
    net = EmbeddingNetwork(2, (8, 4), 2, seed=3)
    theta0 = net.theta.copy()
    model = train(net, aug, build_signed_graph(aug, 1, 1), TrainConfig(epochs=0))
    np.testing.assert_array_equal(model.network.theta, theta0)
    assert model.history == []


def test_training_deterministic_and_history_length():
    aug = _blobs(1)
    graph = build_signed_graph(aug, 1, 2)
    cfg = TrainConfig(hidden_layer_sizes=(8, 4), epochs=15, batch_size=8, seed=5)
    a = train(EmbeddingNetwork(2, (8, 4), 2, seed=1), aug, graph, cfg)
    b = train(EmbeddingNetwork(2, (8, 4), 2, seed=1), aug, graph, cfg)
    assert a.history == b.history
    assert len(a.history) == 15
    np.testing.assert_array_equal(a.network.theta, b.network.theta)


@pytest.mark.parametrize("probs, expected", [((0.9, 0.1), 0), ((0.5, 0.5), 0), ((0.2, 0.8), 1)])
def test_predict_tie_rule(probs, expected):
    net = EmbeddingNetwork(1, (2,), 2)
    net.set_params(np.zeros_like(net.theta))
    net.biases[-1][:] = np.log(probs)
    label, p = predict(TrainedModel(net), np.zeros((1, 1)))
    assert label[0] == expected
    np.testing.assert_allclose(p[0], probs)


def test_checkpoint_and_history_files(tmp_path):
    aug = _blobs(2)
    cfg = TrainConfig(hidden_layer_sizes=(4, 3), epochs=3, batch_size=20)
    model = train(EmbeddingNetwork(2, (4, 3), 2, seed=2), aug, build_signed_graph(aug, 1, 1), cfg)
    save_checkpoint(model, tmp_path / "ckpt.json")
    back = load_checkpoint(tmp_path / "ckpt.json")
    np.testing.assert_array_equal(back.network.theta, model.network.theta)
    assert back.config == cfg
    save_history(model, tmp_path / "history.csv")
    lines = (tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,J_l,J_g,J" and len(lines) == 4
