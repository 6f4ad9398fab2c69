"""Feed-forward embedding network with a softmax head, trained on the joint
cross-entropy plus signed-graph contrastive objective."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DivergenceError, InvalidParameterError

_P_CLAMP = 1e-12


@dataclass
class TrainConfig:
    """Optimiser and loss settings.

    ``reg_lambda`` weights the graph term; ``margin`` is the hinge margin on the
    squared latent distance of negative edges.
    """

    hidden_layer_sizes: tuple = (32, 32, 16)
    reg_lambda: float = 1.0
    margin: float = 1.0
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    lr_decay_every: int = 100
    lr_decay_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.hidden_layer_sizes = tuple(int(h) for h in self.hidden_layer_sizes)
        if not self.hidden_layer_sizes or min(self.hidden_layer_sizes) < 1:
            raise InvalidParameterError("hidden_layer_sizes needs at least one positive width")
        if self.reg_lambda < 0:
            raise InvalidParameterError(f"reg_lambda must be >= 0, got {self.reg_lambda}")
        if not self.margin > 0:
            raise InvalidParameterError(f"margin must be > 0, got {self.margin}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidParameterError("epochs must be >= 0 and batch_size >= 1")
        if not self.learning_rate > 0 or not 0 <= self.momentum < 1:
            raise InvalidParameterError("learning_rate must be > 0 and momentum in [0, 1)")
        if self.lr_decay_every < 1 or not 0 < self.lr_decay_factor <= 1:
            raise InvalidParameterError("lr_decay_every >= 1 and lr_decay_factor in (0, 1]")

    def to_dict(self):
        out = asdict(self)
        out["hidden_layer_sizes"] = list(self.hidden_layer_sizes)
        return out


class EmbeddingNetwork:
    """ReLU MLP ``d -> hidden... -> latent`` followed by a linear softmax head.

    The latent representation is the activation of the last hidden layer.
    Parameters live in one flat vector; ``weights`` and ``biases`` are views
    into it, so updating ``theta`` in place updates the network.
    """

    def __init__(self, n_features, hidden_layer_sizes=(32, 32, 16), n_classes=2, seed=0):
        self.sizes = [int(n_features), *[int(h) for h in hidden_layer_sizes], int(n_classes)]
        self.shapes = [(a, b) for a, b in zip(self.sizes[:-1], self.sizes[1:])]
        n_params = sum(a * b + b for a, b in self.shapes)
        self.theta = np.zeros(n_params)
        self._bind()
        rng = np.random.default_rng(seed)
        for W, (fan_in, fan_out) in zip(self.weights, self.shapes):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            W[...] = rng.uniform(-limit, limit, size=W.shape)

    def _bind(self):
        self.weights, self.biases = [], []
        offset = 0
        for a, b in self.shapes:
            self.weights.append(self.theta[offset : offset + a * b].reshape(a, b))
            offset += a * b
            self.biases.append(self.theta[offset : offset + b])
            offset += b

    @property
    def n_features(self):
        return self.sizes[0]

    @property
    def n_classes(self):
        return self.sizes[-1]

    @property
    def latent_dim(self):
        return self.sizes[-2]

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.theta.shape:
            raise DimensionMismatchError(f"expected {self.theta.shape[0]} parameters")
        self.theta[...] = theta

    def copy(self):
        other = EmbeddingNetwork.__new__(EmbeddingNetwork)
        other.sizes = list(self.sizes)
        other.shapes = list(self.shapes)
        other.theta = self.theta.copy()
        other._bind()
        return other

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def forward_cache(self, X):
        """Activations per layer (input first) and the logits."""
        acts = [self._check(X)]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(np.maximum(acts[-1] @ W + b, 0.0))
        logits = acts[-1] @ self.weights[-1] + self.biases[-1]
        return acts, logits

    def forward(self, X):
        """Return ``(latent, probabilities)`` for each row of ``X``."""
        acts, logits = self.forward_cache(X)
        return acts[-1], softmax(logits)

    def backward(self, acts, d_logits, d_latent=None):
        """Flat gradient of the loss given its derivatives w.r.t. logits and latents."""
        grad = np.zeros_like(self.theta)
        gW, gb = [], []
        offset = 0
        for a, b in self.shapes:
            gW.append(grad[offset : offset + a * b].reshape(a, b))
            offset += a * b
            gb.append(grad[offset : offset + b])
            offset += b
        delta = d_logits
        gW[-1][...] = acts[-1].T @ delta
        gb[-1][...] = delta.sum(axis=0)
        d_act = delta @ self.weights[-1].T
        if d_latent is not None:
            d_act = d_act + d_latent
        for k in range(len(self.shapes) - 2, -1, -1):
            delta = d_act * (acts[k + 1] > 0)
            gW[k][...] = acts[k].T @ delta
            gb[k][...] = delta.sum(axis=0)
            if k > 0:
                d_act = delta @ self.weights[k].T
        return grad


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net, x):
    return net.forward(x)


def _edge_terms(latents, edges, margin):
    i, j, s = edges[:, 0], edges[:, 1], edges[:, 2]
    diff = latents[i] - latents[j]
    dist = np.einsum("ij,ij->i", diff, diff)
    loss = np.where(s > 0, dist, np.maximum(0.0, margin - dist))
    # derivative of each edge term w.r.t. dist; flat hinge region (and its kink) gives 0
    slope = np.where(s > 0, 1.0, np.where(margin - dist > 0, -1.0, 0.0))
    return loss, slope, diff


def graph_loss(latents, graph_or_edges, margin):
    """Mean over edges of the squared latent distance (positive edges) or the
    hinge ``max(0, margin - dist)`` (negative edges). Zero for an empty edge set."""
    edges = getattr(graph_or_edges, "edges", graph_or_edges)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    latents = np.asarray(latents, dtype=np.float64)
    if len(edges) == 0:
        return 0.0
    if edges[:, :2].max() >= len(latents) or edges[:, :2].min() < 0:
        raise DimensionMismatchError("edge indices exceed the number of latents")
    loss, _, _ = _edge_terms(latents, edges, margin)
    return float(loss.mean())


def graph_loss_grad(latents, edges, margin):
    """``graph_loss`` and its gradient with respect to every latent row."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    grad = np.zeros_like(latents)
    if len(edges) == 0:
        return 0.0, grad
    loss, slope, diff = _edge_terms(latents, edges, margin)
    contrib = (2.0 / len(edges)) * slope[:, None] * diff
    np.add.at(grad, edges[:, 0], contrib)
    np.add.at(grad, edges[:, 1], -contrib)
    return float(loss.mean()), grad


def classification_loss(probs, labels):
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) == 0:
        raise InvalidParameterError("classification loss of an empty batch")
    picked = np.clip(probs[np.arange(len(labels)), labels], _P_CLAMP, 1.0)
    return float(-np.log(picked).mean())


def total_loss(J_l, J_g, reg_lambda):
    if reg_lambda < 0:
        raise InvalidParameterError("reg_lambda must be >= 0")
    return J_l + reg_lambda * J_g


def _labeled(kind):
    return np.asarray(kind) != "neg"


def objective(net, batch, X, labels, kind, edges, reg_lambda, margin, with_grad=True):
    """Joint objective restricted to ``batch`` (sorted unique node indices).

    Cross-entropy averages over the labeled (non-negative-neighbor) nodes in the
    batch; the graph term averages over edges with both endpoints in the batch.

    :returns: ``(J_l, J_g, J, grad)``; ``grad`` is ``None`` unless requested
    """
    batch = np.asarray(batch, dtype=np.int64)
    acts, logits = net.forward_cache(X[batch])
    probs = softmax(logits)
    n = len(batch)

    lab = np.flatnonzero(_labeled(kind[batch]))
    d_logits = np.zeros_like(logits)
    if len(lab):
        y = labels[batch][lab]
        J_l = classification_loss(probs[lab], y)
        d_logits[lab] = probs[lab]
        d_logits[lab, y] -= 1.0
        d_logits /= len(lab)
    else:
        J_l = 0.0

    position = np.full(len(X), -1, dtype=np.int64)
    position[batch] = np.arange(n)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    local = edges.copy()
    local[:, 0] = position[edges[:, 0]]
    local[:, 1] = position[edges[:, 1]]
    local = local[(local[:, 0] >= 0) & (local[:, 1] >= 0)]
    J_g, d_latent = graph_loss_grad(acts[-1], local, margin)
    d_latent = reg_lambda * d_latent if reg_lambda > 0 and len(local) else None
    J = total_loss(J_l, J_g, reg_lambda)
    grad = net.backward(acts, d_logits, d_latent) if with_grad else None
    return J_l, J_g, J, grad


def gradients(net, batch, aug, graph, config):
    """Flat analytic gradient of the joint objective on ``batch``."""
    edges = getattr(graph, "edges", graph)
    return objective(
        net, batch, aug.X, aug.labels, aug.kind, edges, config.reg_lambda, config.margin
    )[3]


def anchor_blocks(graph, n_nodes, batch_size, rng):
    """Mini-batches built from whole anchor neighborhoods.

    Anchors are visited in a random order and each contributes itself plus its
    neighbors; a batch is closed once it holds at least ``batch_size`` nodes.
    Nodes that are neither anchors nor neighbors are never batched, which is
    harmless because they carry no label and no edge.
    """
    anchors = graph.anchors if graph is not None and len(graph.anchor_mask) else np.arange(n_nodes)
    batches, current = [], set()
    for a in rng.permutation(anchors):
        current.add(int(a))
        if graph is not None:
            current.update(int(j) for j in graph.edges_of(a)[:, 1])
        if len(current) >= batch_size:
            batches.append(np.array(sorted(current), dtype=np.int64))
            current = set()
    if current:
        batches.append(np.array(sorted(current), dtype=np.int64))
    return batches


@dataclass
class TrainedModel:
    network: EmbeddingNetwork
    history: list = field(default_factory=list)
    config: TrainConfig = field(default_factory=TrainConfig)

    def predict(self, X):
        return predict(self, X)[0]

    def predict_proba(self, X):
        return self.network.forward(X)[1]

    def transform(self, X):
        return self.network.forward(X)[0]


def train(net, aug, graph, config):
    """Momentum mini-batch descent on the joint objective.

    The network is trained in place and wrapped in a ``TrainedModel``. History
    rows hold the full-data ``(J_l, J_g, J)`` after each epoch.
    """
    X = np.asarray(aug.X, dtype=np.float64)
    labels = np.asarray(aug.labels, dtype=np.int64)
    kind = np.asarray(aug.kind)
    edges = graph.edges if graph is not None else np.empty((0, 3), dtype=np.int64)
    all_nodes = np.arange(len(X))
    rng = np.random.default_rng(config.seed)
    velocity = np.zeros_like(net.theta)
    history = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.lr_decay_factor ** (epoch // config.lr_decay_every)
        for batch in anchor_blocks(graph, len(X), config.batch_size, rng):
            _, _, J, grad = objective(
                net, batch, X, labels, kind, edges, config.reg_lambda, config.margin
            )
            if not np.isfinite(J) or not np.all(np.isfinite(grad)):
                raise DivergenceError(f"non-finite objective at epoch {epoch}")
            velocity = config.momentum * velocity - lr * grad
            net.theta += velocity
        J_l, J_g, J, _ = objective(
            net, all_nodes, X, labels, kind, edges, config.reg_lambda, config.margin, with_grad=False
        )
        if not np.isfinite(J):
            raise DivergenceError(f"non-finite objective after epoch {epoch}: J_l={J_l}, J_g={J_g}")
        history.append((epoch, J_l, J_g, J))
    return TrainedModel(net, history, config)


def predict(model, X):
    """Class ids (ties go to the lower id) and probability rows."""
    net = model.network if isinstance(model, TrainedModel) else model
    _, probs = net.forward(X)
    return np.argmax(probs, axis=1), probs


def save_checkpoint(model, path):
    net = model.network
    payload = {
        "sizes": net.sizes,
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "config": model.config.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    sizes = payload["sizes"]
    net = EmbeddingNetwork(sizes[0], sizes[1:-1], sizes[-1])
    for W, b, W_src, b_src in zip(net.weights, net.biases, payload["weights"], payload["biases"]):
        W[...] = np.asarray(W_src, dtype=np.float64)
        b[...] = np.asarray(b_src, dtype=np.float64)
    return TrainedModel(net, [], TrainConfig(**payload["config"]))


def save_history(model, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "J_l", "J_g", "J"])
        for epoch, J_l, J_g, J in model.history:
            writer.writerow([epoch, repr(float(J_l)), repr(float(J_g)), repr(float(J))])
