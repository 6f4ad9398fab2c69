"""Adversarial neighbor augmentation.

Seed points of a class are corrupted with Gaussian noise; a fresh linear SVM
discriminator is trained per batch of ``T`` candidates, and exactly one
candidate per batch is accepted. Positive neighbors maximise the
discriminator's "real" probability minus a diversity penalty; negative
neighbors minimise it plus diversity and proximity penalties.
"""

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import LabeledDataset
from .discriminator import SvmTrainConfig, train_svm
from .errors import DegenerateRhoError, InsufficientSamplesError, InvalidParameterError, ZeroVectorError

KINDS = ("orig", "pos", "neg")
_ZERO_TOL = 1e-12


class DegenerateRhoWarning(UserWarning):
    pass


@dataclass
class AugmentConfig:
    """Augmentation settings.

    ``noise_sigma`` is an absolute corruption scale; when ``None`` it defaults to
    ``noise_scale`` times the per-coordinate standard deviation of the training data.
    """

    T: int = 200
    gamma: float = 1e-2
    noise_sigma: float | None = None
    noise_scale: float = 0.1
    n_pos_total: int = 5
    n_neg_total: int = 20
    seed: int = 0
    svm: SvmTrainConfig = field(default_factory=SvmTrainConfig)

    def __post_init__(self):
        if isinstance(self.svm, dict):
            self.svm = SvmTrainConfig(**self.svm)
        if self.T < 2:
            raise InvalidParameterError(f"T must be >= 2, got {self.T}")
        if self.gamma < 0:
            raise InvalidParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.n_pos_total < 0 or self.n_neg_total < 0:
            raise InvalidParameterError("neighbor counts must be >= 0")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be >= 0")
        if self.noise_scale < 0:
            raise InvalidParameterError("noise_scale must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Radii:
    rho: float

    @property
    def r1(self):
        return self.rho

    @property
    def r2(self):
        return self.rho

    @property
    def r3(self):
        return 3.0 * self.rho


@dataclass
class BatchRecord:
    """Everything needed to re-score one selection batch offline."""

    label: int
    kind: str
    batch: int
    candidates: np.ndarray
    seed_indices: np.ndarray
    scores: np.ndarray
    accepted: int
    existing: np.ndarray
    svm: object


def cosine_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a @ a, b @ b
    if na == 0 or nb == 0:
        raise ZeroVectorError("cosine distance is undefined for a zero vector")
    return float(np.clip(1.0 - (a @ b) / np.sqrt(na * nb), 0.0, 2.0))


def pairwise_cosine_distances(A, B):
    """``(len(A), len(B))`` matrix of cosine distances."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.einsum("ij,ij->i", A, A)
    nb = np.einsum("ij,ij->i", B, B)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVectorError("cosine distance is undefined for a zero vector")
    return np.clip(1.0 - (A @ B.T) / np.sqrt(np.outer(na, nb)), 0.0, 2.0)


def _min_distance(points, reference):
    if len(reference) == 0:
        return None
    return pairwise_cosine_distances(points, reference).min(axis=1)


def compute_radii(X_c, allow_fallback=False):
    """Radii from the minimum cosine distance over distinct pairs of ``X_c``.

    A zero minimum (duplicate or parallel points) raises ``DegenerateRhoError``
    unless ``allow_fallback``, in which case the smallest strictly positive pair
    distance is used and a ``DegenerateRhoWarning`` issued.
    """
    X_c = np.atleast_2d(np.asarray(X_c, dtype=np.float64))
    if X_c.shape[0] < 2:
        raise InsufficientSamplesError("at least two samples are needed to compute radii")
    D = pairwise_cosine_distances(X_c, X_c)
    pairs = D[np.triu_indices(len(X_c), k=1)]
    rho = float(pairs.min())
    if rho > _ZERO_TOL:
        return Radii(rho)
    positive = pairs[pairs > _ZERO_TOL]
    if not allow_fallback or len(positive) == 0:
        raise DegenerateRhoError(
            "minimum pairwise cosine distance is zero (duplicate or parallel samples)"
        )
    rho = float(positive.min())
    warnings.warn(
        f"rho was zero; using smallest non-zero pair distance {rho:.3e}", DegenerateRhoWarning
    )
    return Radii(rho)


def corrupt_seed(x, noise_sigma, rng):
    """``x`` plus zero-mean Gaussian noise; ``noise_sigma`` may be per-coordinate."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.asarray(noise_sigma) < 0):
        raise InvalidParameterError("noise_sigma must be >= 0")
    return x + rng.normal(size=x.shape) * noise_sigma


def _hinge(v):
    return np.maximum(0.0, v)


def score_positive_candidate(x, discriminator, X_c_plus_existing, radii, gamma):
    """Discriminator "real" probability minus the diversity penalty.

    Vectorised over rows when ``x`` is 2-D.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    score = discriminator.real_probability(X)
    nearest = _min_distance(X, np.asarray(X_c_plus_existing).reshape(-1, X.shape[1]))
    if nearest is not None:
        score = score - gamma * _hinge(radii.r1 - nearest)
    return float(score[0]) if single else score


def score_negative_candidate(x, discriminator, X_c, X_c_minus_existing, radii, gamma):
    """Discriminator "real" probability plus diversity and proximity penalties.

    Lower is better. Vectorised over rows when ``x`` is 2-D.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    score = discriminator.real_probability(X)
    nearest_neg = _min_distance(X, np.asarray(X_c_minus_existing).reshape(-1, X.shape[1]))
    if nearest_neg is not None:
        score = score + gamma * _hinge(radii.r2 - nearest_neg)
    nearest_orig = _min_distance(X, np.asarray(X_c).reshape(-1, X.shape[1]))
    score = score + gamma * _hinge(nearest_orig - radii.r3)
    return float(score[0]) if single else score


def _resolve_sigma(config, reference):
    if config.noise_sigma is not None:
        return config.noise_sigma
    return config.noise_scale * np.asarray(reference, dtype=np.float64).std(axis=0)


def _search(kind, X_c, config, radii, rng, noise_sigma, label, records):
    X_c = np.atleast_2d(np.asarray(X_c, dtype=np.float64))
    if X_c.shape[0] < 2:
        raise InsufficientSamplesError("each class needs at least two samples to augment")
    n_total = config.n_pos_total if kind == "pos" else config.n_neg_total
    d = X_c.shape[1]
    accepted = np.empty((0, d))
    seeds_used, batches = [], []
    for batch in range(n_total):
        seed_idx = rng.integers(0, len(X_c), size=config.T)
        candidates = corrupt_seed(X_c[seed_idx], noise_sigma, rng)
        real = np.vstack([X_c, accepted])
        svm_cfg = SvmTrainConfig(**{**config.svm.to_dict(), "seed": int(rng.integers(2**31))})
        svm = train_svm(real, candidates, svm_cfg)
        if kind == "pos":
            scores = score_positive_candidate(candidates, svm, accepted, radii, config.gamma)
            best = int(np.argmax(scores))
        else:
            scores = score_negative_candidate(candidates, svm, X_c, accepted, radii, config.gamma)
            best = int(np.argmin(scores))
        if records is not None:
            records.append(
                BatchRecord(label, kind, batch, candidates, seed_idx, scores, best, accepted.copy(), svm)
            )
        accepted = np.vstack([accepted, candidates[best]])
        seeds_used.append(int(seed_idx[best]))
        batches.append(batch)
    return accepted, np.array(seeds_used, dtype=np.int64), np.array(batches, dtype=np.int64)


def _class_rng(seed, label, kind):
    return np.random.default_rng([int(seed), int(label), KINDS.index(kind)])


def generate_positive_neighbors(X_c, config, radii=None, label=0, records=None, noise_sigma=None):
    """Accept one positive neighbor per batch until ``config.n_pos_total`` exist.

    :param records: optional list that receives one ``BatchRecord`` per batch
    :returns: ``(n_pos_total, d)`` array
    """
    radii = radii or compute_radii(X_c, allow_fallback=True)
    sigma = _resolve_sigma(config, X_c) if noise_sigma is None else noise_sigma
    rng = _class_rng(config.seed, label, "pos")
    return _search("pos", X_c, config, radii, rng, sigma, label, records)[0]


def generate_negative_neighbors(X_c, config, radii=None, label=0, records=None, noise_sigma=None):
    radii = radii or compute_radii(X_c, allow_fallback=True)
    sigma = _resolve_sigma(config, X_c) if noise_sigma is None else noise_sigma
    rng = _class_rng(config.seed, label, "neg")
    return _search("neg", X_c, config, radii, rng, sigma, label, records)[0]


@dataclass(eq=False)
class AugmentedDataset:
    """Originals plus generated neighbors, flattened into one node array.

    Node order is: all originals in their training order, then positives of
    class 0, 1, ..., then negatives of class 0, 1, .... ``seed_index`` is the
    position (within the training set) of the original that was corrupted, and
    -1 for originals; ``batch`` is -1 for originals.
    """

    X: np.ndarray
    labels: np.ndarray
    kind: np.ndarray
    seed_index: np.ndarray
    batch: np.ndarray
    radii: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.X.shape[0]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1

    def part(self, label, kind):
        return self.X[(self.labels == label) & (self.kind == kind)]

    def originals(self):
        mask = self.kind == "orig"
        return LabeledDataset(self.X[mask], self.labels[mask], name="originals")

    def __eq__(self, other):
        if not isinstance(other, AugmentedDataset):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, a), getattr(other, a))
            for a in ("X", "labels", "kind", "seed_index", "batch")
        )

    @classmethod
    def from_originals(cls, X, labels):
        X = np.asarray(X, dtype=np.float64)
        n = len(X)
        return cls(
            X.copy(),
            np.asarray(labels, dtype=np.int64).copy(),
            np.full(n, "orig", dtype=object),
            np.full(n, -1, dtype=np.int64),
            np.full(n, -1, dtype=np.int64),
        )


def expand_dataset(train, config, records=None):
    """Generate positive and negative neighbors for every class of ``train``.

    Radii are computed per class on the original samples, before any
    augmentation. The noise scale, when not given explicitly, comes from the
    whole training set.
    """
    sigma = _resolve_sigma(config, train.samples)
    parts_X = [train.samples]
    parts = {"labels": [train.labels], "kind": [], "seed_index": [], "batch": []}
    parts["kind"].append(np.full(len(train), "orig", dtype=object))
    parts["seed_index"].append(np.full(len(train), -1, dtype=np.int64))
    parts["batch"].append(np.full(len(train), -1, dtype=np.int64))
    radii = {}
    generated = {"pos": [], "neg": []}
    for c in range(train.n_classes):
        members = np.flatnonzero(train.labels == c)
        X_c = train.samples[members]
        if len(X_c) < 2:
            raise InsufficientSamplesError(f"class {c} has fewer than two samples")
        if config.n_pos_total == 0 and config.n_neg_total == 0:
            continue
        r = compute_radii(X_c, allow_fallback=True)
        radii[c] = r.rho
        for kind in ("pos", "neg"):
            rng = _class_rng(config.seed, c, kind)
            pts, seeds, batches = _search(kind, X_c, config, r, rng, sigma, c, records)
            generated[kind].append((c, pts, members[seeds] if len(seeds) else seeds, batches))
    for kind in ("pos", "neg"):
        for c, pts, seeds, batches in generated[kind]:
            parts_X.append(pts)
            parts["labels"].append(np.full(len(pts), c, dtype=np.int64))
            parts["kind"].append(np.full(len(pts), kind, dtype=object))
            parts["seed_index"].append(seeds.astype(np.int64))
            parts["batch"].append(batches)
    return AugmentedDataset(
        np.vstack(parts_X),
        np.concatenate(parts["labels"]).astype(np.int64),
        np.concatenate(parts["kind"]),
        np.concatenate(parts["seed_index"]),
        np.concatenate(parts["batch"]),
        radii=radii,
    )


AUGMENTED_COLUMNS = ("class", "kind", "seed_index", "batch")


def save_augmented(aug, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        d = aug.X.shape[1]
        writer.writerow([f"f{k}" for k in range(d)] + list(AUGMENTED_COLUMNS))
        for x, c, kind, s, b in zip(aug.X, aug.labels, aug.kind, aug.seed_index, aug.batch):
            writer.writerow([repr(float(v)) for v in x] + [int(c), kind, int(s), int(b)])


def load_augmented(path):
    from .dataset import read_feature_csv
    from .errors import MalformedFileError

    X, extra = read_feature_csv(path, AUGMENTED_COLUMNS)
    labels, kinds, seeds, batches = [], [], [], []
    for lineno, (c, kind, s, b) in enumerate(extra, start=2):
        if kind not in KINDS:
            raise MalformedFileError(path, f"unknown kind {kind!r}", row=lineno, field="kind")
        try:
            labels.append(int(c))
            seeds.append(int(s))
            batches.append(int(b))
        except ValueError:
            raise MalformedFileError(path, "class, seed_index and batch must be integers", row=lineno) from None
        kinds.append(kind)
    return AugmentedDataset(
        X,
        np.array(labels, dtype=np.int64),
        np.array(kinds, dtype=object),
        np.array(seeds, dtype=np.int64),
        np.array(batches, dtype=np.int64),
    )
