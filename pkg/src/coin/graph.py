"""Signed k-nearest-neighbor graph over an augmented dataset."""

import csv
from dataclasses import dataclass

import numpy as np

from .augment import pairwise_cosine_distances
from .errors import DimensionMismatchError, GraphError, InvalidParameterError, MalformedFileError


@dataclass(eq=False)
class SignedGraph:
    """Edges ``(anchor, neighbor, sign)`` grouped by anchor in ascending order.

    Within an anchor, positive edges come first, then negative edges, each
    sorted by increasing input-space cosine distance.
    """

    n_nodes: int
    edges: np.ndarray
    anchor_mask: np.ndarray
    n_pos: int = 0
    n_neg: int = 0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        self.anchor_mask = np.asarray(self.anchor_mask, dtype=bool)
        order = np.argsort(self.edges[:, 0], kind="stable")
        if not np.array_equal(order, np.arange(len(order))):
            raise InvalidParameterError("edges must be grouped by ascending anchor index")
        self._starts = np.searchsorted(self.edges[:, 0], np.arange(self.n_nodes + 1))

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def anchors(self):
        return np.flatnonzero(self.anchor_mask)

    def __eq__(self, other):
        if not isinstance(other, SignedGraph):
            return NotImplemented
        return self.n_nodes == other.n_nodes and np.array_equal(self.edges, other.edges)

    def edges_of(self, i):
        return self.edges[self._starts[i] : self._starts[i + 1]]

    def edge_set(self):
        return {tuple(int(v) for v in e) for e in self.edges}


def _pools(labels, kind):
    on_manifold = (kind == "orig") | (kind == "pos")
    neg = kind == "neg"
    return on_manifold, neg


def pairwise_distances(X, metric):
    if metric == "cosine":
        return pairwise_cosine_distances(X, X)
    if metric == "euclidean":
        # squared distances from explicit differences: exact for integer-valued inputs
        diff = X[:, None, :] - X[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    raise InvalidParameterError(f"unknown metric {metric!r}")


def build_signed_graph(aug, n_pos, n_neg, metric="cosine"):
    """Connect every original and positive neighbor to its nearest same-class and
    opposing points.

    For an anchor of class ``c`` the positive pool is the class-``c`` originals
    and positives other than the anchor itself; the negative pool is the
    originals and positives of every other class together with the class-``c``
    negative neighbors. Generated negatives are never anchors. Distances are
    taken in input space (``metric`` is ``"cosine"`` or ``"euclidean"``); ties
    go to the lower node index.

    :param aug: ``AugmentedDataset``
    :param n_pos: positive neighbors per anchor
    :param n_neg: negative neighbors per anchor
    """
    if n_pos < 0 or n_neg < 0:
        raise InvalidParameterError("neighbor counts must be >= 0")
    X = np.asarray(aug.X, dtype=np.float64)
    labels = np.asarray(aug.labels)
    kind = np.asarray(aug.kind)
    if X.ndim != 2 or len(labels) != len(X) or len(kind) != len(X):
        raise DimensionMismatchError("augmented dataset arrays disagree in length")
    N = len(X)
    on_manifold, neg = _pools(labels, kind)
    anchor_mask = on_manifold.copy()
    if N == 0 or (n_pos == 0 and n_neg == 0):
        if metric not in ("cosine", "euclidean"):
            raise InvalidParameterError(f"unknown metric {metric!r}")
        return SignedGraph(N, np.empty((0, 3), dtype=np.int64), anchor_mask, n_pos, n_neg)

    D = pairwise_distances(X, metric)
    edges = []
    for i in np.flatnonzero(anchor_mask):
        c = labels[i]
        same = labels == c
        for count, pool_mask, sign in (
            (n_pos, on_manifold & same, 1),
            (n_neg, (on_manifold & ~same) | (neg & same), -1),
        ):
            if count == 0:
                continue
            pool_mask = pool_mask.copy()
            pool_mask[i] = False
            pool = np.flatnonzero(pool_mask)
            if len(pool) == 0:
                kind_name = "positive" if sign > 0 else "negative"
                raise GraphError(f"anchor {i} has an empty {kind_name} pool")
            nearest = pool[np.argsort(D[i, pool], kind="stable")[:count]]
            edges.extend((int(i), int(j), sign) for j in nearest)
    edges = np.array(edges, dtype=np.int64).reshape(-1, 3)
    return SignedGraph(N, edges, anchor_mask, n_pos, n_neg)


def neighbors_of(graph, i):
    """``[(j, sign), ...]`` for anchor ``i`` in stored order."""
    if not 0 <= i < graph.n_nodes:
        raise GraphError(f"node {i} out of range for a graph with {graph.n_nodes} nodes")
    if not graph.anchor_mask[i]:
        raise GraphError(f"node {i} is not an anchor")
    return [(int(j), int(s)) for _, j, s in graph.edges_of(i)]


def save_graph(graph, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "sign"])
        writer.writerows(graph.edges.tolist())


def load_graph(path, aug):
    """Read an edge list; node count and anchors come from ``aug``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["i", "j", "sign"]:
        raise MalformedFileError(path, "header must be i,j,sign", row=1)
    edges = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            i, j, s = (int(v) for v in row)
        except ValueError:
            raise MalformedFileError(path, "expected three integers", row=lineno) from None
        if s not in (1, -1) or not (0 <= i < aug.n_nodes and 0 <= j < aug.n_nodes):
            raise MalformedFileError(path, "sign must be +-1 and indices in range", row=lineno)
        edges.append((i, j, s))
    on_manifold, _ = _pools(aug.labels, aug.kind)
    return SignedGraph(aug.n_nodes, np.array(edges, dtype=np.int64).reshape(-1, 3), on_manifold)
