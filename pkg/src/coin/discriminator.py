"""Linear SVM discriminator trained by subgradient descent on the hinge loss."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DimensionMismatchError, InsufficientSamplesError, InvalidParameterError, NotTrainedError

# float64 cannot represent the sigmoid far in either tail; keep the output inside (0, 1)
_P_MIN = np.finfo(np.float64).tiny
_P_MAX = np.nextafter(1.0, 0.0)
# weight norms below this are rounding residue of an exactly-zero optimum
_W_EPS = 1e-12


def real_probability_from_distance(d):
    """Logistic sigmoid of a signed distance, kept strictly inside (0, 1)."""
    return np.clip(expit(d), _P_MIN, _P_MAX)


@dataclass
class SvmTrainConfig:
    epochs: int = 200
    learning_rate: float = 0.1
    decay: float = 0.01
    reg_strength: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise InvalidParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.decay < 0 or self.reg_strength < 0:
            raise InvalidParameterError("decay and reg_strength must be >= 0")

    def to_dict(self):
        return asdict(self)


class LinearSvm(ClassifierMixin, BaseEstimator):
    """L2-regularised linear SVM for ``y in {-1, +1}``.

    The objective ``mean(hinge) + reg_strength / 2 * ||w||^2`` is minimised by
    full-batch subgradient steps with step size
    ``learning_rate / (1 + t * decay)``. A step that would raise the objective
    is halved until it does not (at most ``max_halvings`` times) or skipped, so
    ``loss_curve_`` is non-increasing.

    When the two classes differ in size, the smaller one is resampled with
    replacement (seeded by ``random_state``) up to the size of the larger.

    :param epochs: number of subgradient steps
    :param learning_rate: initial step size
    :param decay: step-size decay rate
    :param reg_strength: L2 penalty weight
    :param random_state: seed for the class-balancing resample
    """

    max_halvings = 30

    def __init__(self, epochs=200, learning_rate=0.1, decay=0.01, reg_strength=1e-3, random_state=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.decay = decay
        self.reg_strength = reg_strength
        self.random_state = random_state

    def _objective(self, X, y, w, b):
        margins = 1.0 - y * (X @ w + b)
        return np.maximum(margins, 0.0).mean() + 0.5 * self.reg_strength * (w @ w)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.where(y > 0, 1.0, -1.0)
        self.classes_ = np.array([-1, 1])
        pos, neg = np.flatnonzero(y > 0), np.flatnonzero(y < 0)
        if len(pos) == 0 or len(neg) == 0:
            raise InsufficientSamplesError("both real (+1) and generated (-1) samples are required")
        if len(pos) != len(neg):
            rng = np.random.default_rng(self.random_state)
            small, large = (pos, neg) if len(pos) < len(neg) else (neg, pos)
            extra = rng.choice(small, size=len(large) - len(small), replace=True)
            idx = np.concatenate([large, small, extra])
            X, y = X[idx], y[idx]

        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        loss = self._objective(X, y, w, b)
        curve = []
        for t in range(self.epochs):
            active = (y * (X @ w + b)) < 1.0
            g_w = self.reg_strength * w - (y[active, None] * X[active]).sum(axis=0) / n
            g_b = -y[active].sum() / n
            step = self.learning_rate / (1.0 + t * self.decay)
            for _ in range(self.max_halvings):
                w_new, b_new = w - step * g_w, b - step * g_b
                new_loss = self._objective(X, y, w_new, b_new)
                if new_loss <= loss:
                    w, b, loss = w_new, b_new, new_loss
                    break
                step *= 0.5
            curve.append(loss)

        self.coef_ = w
        self.intercept_ = float(b)
        self.n_features_in_ = d
        self.loss_curve_ = np.array(curve)
        return self

    def _check(self, X):
        try:
            check_is_fitted(self, "coef_")
        except Exception:
            raise NotTrainedError("discriminator has not been trained") from None
        X = check_array(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def decision_function(self, X):
        X = self._check(X)
        return X @ self.coef_ + self.intercept_

    def signed_distance(self, X):
        """``(w.x + b) / ||w||``; zero everywhere when ``w`` vanishes."""
        raw = self.decision_function(X)
        norm = np.linalg.norm(self.coef_)
        if norm <= _W_EPS:
            return np.zeros_like(raw)
        return raw / norm

    def real_probability(self, X):
        return real_probability_from_distance(self.signed_distance(X))

    def predict_proba(self, X):
        p = self.real_probability(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)


def train_svm(real, generated, config=None):
    """Fit a discriminator with ``real`` labelled +1 and ``generated`` labelled -1."""
    config = config or SvmTrainConfig()
    real = np.atleast_2d(np.asarray(real, dtype=np.float64))
    generated = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    if real.shape[0] == 0 or generated.shape[0] == 0:
        raise InsufficientSamplesError("real and generated sets must both be non-empty")
    if real.shape[1] != generated.shape[1]:
        raise DimensionMismatchError(
            f"real has dimension {real.shape[1]}, generated has {generated.shape[1]}"
        )
    X = np.vstack([real, generated])
    y = np.concatenate([np.ones(len(real)), -np.ones(len(generated))])
    svm = LinearSvm(
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        decay=config.decay,
        reg_strength=config.reg_strength,
        random_state=config.seed,
    )
    return svm.fit(X, y)


def signed_distance(svm, x):
    out = svm.signed_distance(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def real_probability(svm, x):
    out = svm.real_probability(x)
    return float(out[0]) if np.ndim(x) == 1 else out
