"""Classification metrics, latent margin statistics and PCA projection."""

import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import rankdata

from .errors import InsufficientSamplesError, InvalidParameterError


class RankDeficiencyWarning(UserWarning):
    pass


def accuracy(predictions, labels):
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(labels) == 0:
        raise InvalidParameterError("accuracy of an empty input")
    if len(predictions) != len(labels):
        raise InvalidParameterError(f"length mismatch: {len(predictions)} vs {len(labels)}")
    return float(np.mean(predictions == labels))


def auc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Tied scores receive average ranks, so each tied positive/negative pair
    counts one half.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(scores) != len(labels):
        raise InvalidParameterError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidParameterError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


class MarginStats(NamedTuple):
    intra_mean: float
    inter_mean: float
    margin_ratio: float
    degenerate: bool


def margin_stats(latents, labels):
    """Mean within-class and between-class Euclidean distances and their ratio.

    Pairs are pooled over all classes. When every class has collapsed to a
    point the ratio is undefined: ``margin_ratio`` is NaN and ``degenerate`` set.
    """
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise InsufficientSamplesError("margin statistics need at least two classes")
    intra_sum, intra_n, inter_sum, inter_n = 0.0, 0, 0.0, 0
    for k, c in enumerate(classes):
        A = latents[labels == c]
        if len(A) < 2:
            raise InsufficientSamplesError(f"class {c} needs at least two samples")
        d = pdist(A)
        intra_sum += d.sum()
        intra_n += len(d)
        for c2 in classes[k + 1 :]:
            d = cdist(A, latents[labels == c2])
            inter_sum += d.sum()
            inter_n += d.size
    intra = intra_sum / intra_n
    inter = inter_sum / inter_n
    if intra == 0.0:
        return MarginStats(0.0, float(inter), float("nan"), True)
    return MarginStats(float(intra), float(inter), float(inter / intra), False)


def pca_project(latents, k=2, tol=1e-10):
    """Coordinates of the centred data on its top ``k`` principal axes.

    Each axis is signed so its largest-magnitude loading is positive. Axes
    whose singular value is below ``tol`` times the largest (or all axes, for
    constant data) are reported via ``RankDeficiencyWarning`` and returned as
    zero columns.
    """
    Z = np.asarray(latents, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < k or Z.shape[1] < k:
        raise InvalidParameterError(f"need at least {k} samples and {k} dimensions")
    Z = Z - Z.mean(axis=0)
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    out = np.zeros((Z.shape[0], k))
    cutoff = tol * s[0] if s[0] > 0 else np.inf
    rank = int(np.sum(s[:k] > cutoff))
    for a in range(rank):
        axis = Vt[a]
        if axis[np.argmax(np.abs(axis))] < 0:
            axis = -axis
        out[:, a] = Z @ axis
    if rank < k:
        warnings.warn(f"latents have rank {rank} < {k}; trailing components are zero", RankDeficiencyWarning)
    return out


@dataclass
class MetricsReport:
    accuracy: float
    auc: float
    intra_mean: float
    inter_mean: float
    margin_ratio: float
    n_test: int
    degenerate_margin: bool = False
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def evaluate(model, X_test, y_test, config=None):
    """Accuracy, AUC (class-1 probability as score) and test-set margin statistics."""
    latents, probs = model.network.forward(X_test)
    preds = np.argmax(probs, axis=1)
    stats = margin_stats(latents, y_test)
    return MetricsReport(
        accuracy=accuracy(preds, y_test),
        auc=auc(probs[:, 1], y_test),
        intra_mean=stats.intra_mean,
        inter_mean=stats.inter_mean,
        margin_ratio=stats.margin_ratio,
        n_test=int(len(y_test)),
        degenerate_margin=stats.degenerate,
        config=dict(config or {}),
    )
