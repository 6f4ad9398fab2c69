"""Labeled vector datasets: synthetic generation, splitting, CSV persistence."""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, MalformedFileError, UnknownClassError


@dataclass(eq=False)
class LabeledDataset:
    """Samples with integer class labels ``0 .. C-1``, every class present.

    :param samples: ``(N, d)`` array of finite features
    :param labels: ``(N,)`` integer class ids
    :param name: identifier carried into file names and reports
    :param meta: free-form provenance (generator parameters), saved as a JSON sidecar
    """

    samples: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.samples, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidParameterError("samples must be a 2-D array with d >= 1")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidParameterError(
                f"samples and labels differ in length ({X.shape[0]} vs {y.shape})"
            )
        if X.shape[0] == 0:
            raise InvalidParameterError("dataset is empty")
        if not np.all(np.isfinite(X)):
            raise InvalidParameterError("samples contain NaN or Inf")
        if y.dtype.kind == "f":
            if not np.all(y == np.round(y)):
                raise InvalidParameterError("labels must be integers")
        y = y.astype(np.int64)
        if y.min() < 0:
            raise InvalidParameterError("labels must be non-negative class ids")
        missing = sorted(set(range(int(y.max()) + 1)) - set(y.tolist()))
        if missing:
            raise InvalidParameterError(f"classes {missing} have no samples")
        self.samples = X
        self.labels = y

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_features(self):
        return self.samples.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1

    def __len__(self):
        return self.n_samples

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.samples[indices].copy(),
            self.labels[indices].copy(),
            name=name or self.name,
            meta=dict(self.meta),
        )


@dataclass(frozen=True, eq=False)
class ClassSubset:
    parent: LabeledDataset
    label: int
    indices: np.ndarray

    @property
    def samples(self):
        return self.parent.samples[self.indices]

    def __len__(self):
        return len(self.indices)


def generate_entangled_manifolds(n_per_class, noise_sigma=0.2, rotation=0.0, seed=0):
    """Two interleaved half-circle arcs ("two moons") in the plane.

    Class 0 lies on the upper unit half-circle centred at the origin; class 1 on
    the lower unit half-circle centred at ``(1, 0.5)``. Gaussian noise of scale
    ``noise_sigma`` is added, then everything is rotated about the origin.
    """
    if int(n_per_class) != n_per_class or n_per_class < 1:
        raise InvalidParameterError(f"n_per_class must be a positive integer, got {n_per_class}")
    if not noise_sigma >= 0:
        raise InvalidParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
    n = int(n_per_class)
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(0.0, math.pi, size=n)
    t1 = rng.uniform(0.0, math.pi, size=n)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower])
    if noise_sigma > 0:
        X = X + rng.normal(scale=noise_sigma, size=X.shape)
    if rotation:
        c, s = math.cos(rotation), math.sin(rotation)
        X = X @ np.array([[c, s], [-s, c]])
    y = np.repeat([0, 1], n)
    meta = {
        "generator": "entangled_manifolds",
        "n_per_class": n,
        "noise_sigma": float(noise_sigma),
        "rotation": float(rotation),
        "seed": int(seed),
    }
    return LabeledDataset(X, y, name="two_moons", meta=meta)


def split(dataset, test_fraction=0.3, seed=0):
    """Stratified train/test split.

    Each class contributes ``round(test_fraction * N_c)`` test samples, clipped so
    that both parts keep at least one sample of the class. Indices inside each part
    stay in their original order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidParameterError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        members = np.flatnonzero(dataset.labels == c)
        if len(members) < 2:
            raise InvalidParameterError(
                f"class {c} has {len(members)} sample(s); stratified split needs 2"
            )
        n_test = min(max(int(round(test_fraction * len(members))), 1), len(members) - 1)
        perm = rng.permutation(members)
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    train = dataset.subset(train_idx, name=f"{dataset.name}_train")
    test = dataset.subset(test_idx, name=f"{dataset.name}_test")
    train.meta["source_indices"] = train_idx.tolist()
    test.meta["source_indices"] = test_idx.tolist()
    return train, test


def class_subset(dataset, c):
    if not 0 <= c < dataset.n_classes:
        raise UnknownClassError(f"class {c} not present (dataset has {dataset.n_classes})")
    return ClassSubset(dataset, int(c), np.flatnonzero(dataset.labels == c))


def fit_standardizer(X):
    """Per-coordinate mean and scale; zero-variance coordinates get scale 1."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def standardize(dataset, mean, scale):
    return LabeledDataset(
        (dataset.samples - mean) / scale, dataset.labels.copy(), dataset.name, dict(dataset.meta)
    )


def _sidecar(path):
    return Path(path).with_suffix(".json")


def save_dataset(dataset, path):
    path = Path(path)
    d = dataset.n_features
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{k}" for k in range(d)] + ["label"])
        for x, label in zip(dataset.samples, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(label)])
    if dataset.meta:
        meta = {"name": dataset.name, **dataset.meta}
        _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_feature_csv(path, extra_columns=("label",)):
    """Parse ``f0..f{d-1}`` followed by ``extra_columns``; returns (X, extra rows)."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedFileError(path, "empty file")
    header = rows[0]
    n_extra = len(extra_columns)
    d = len(header) - n_extra
    expected = [f"f{k}" for k in range(d)] + list(extra_columns)
    if d < 1 or header != expected:
        raise MalformedFileError(path, f"header must be {','.join(expected[:1])},...,{','.join(extra_columns)}", row=1)
    X = np.empty((len(rows) - 1, d))
    extra = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedFileError(
                path, f"expected {len(header)} fields, found {len(row)}", row=lineno
            )
        for k in range(d):
            try:
                X[lineno - 2, k] = float(row[k])
            except ValueError:
                raise MalformedFileError(
                    path, f"non-numeric value {row[k]!r}", row=lineno, field=header[k]
                ) from None
        extra.append(row[d:])
    return X, extra


def load_dataset(path):
    path = Path(path)
    X, extra = read_feature_csv(path)
    labels = []
    for lineno, (value,) in enumerate(extra, start=2):
        try:
            labels.append(int(value))
        except ValueError:
            raise MalformedFileError(
                path, f"label {value!r} is not an integer", row=lineno, field="label"
            ) from None
    meta = {}
    name = path.stem
    if _sidecar(path).exists():
        meta = json.loads(_sidecar(path).read_text())
        name = meta.pop("name", name)
    try:
        return LabeledDataset(X, np.array(labels, dtype=np.int64), name=name, meta=meta)
    except InvalidParameterError as exc:
        raise MalformedFileError(path, str(exc)) from None
