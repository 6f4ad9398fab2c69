"""scikit-learn estimator wrapping the full augment / graph / train pipeline."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .augment import AugmentConfig, expand_dataset
from .dataset import LabeledDataset, fit_standardizer
from .discriminator import SvmTrainConfig
from .graph import build_signed_graph
from .model import EmbeddingNetwork, TrainConfig, train


class COINClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Contrastive classifier trained on adversarially augmented data.

    ``fit`` standardizes the features, generates ``n_pos_generated`` positive and
    ``n_neg_generated`` negative neighbors per class, builds the signed k-NN
    graph with ``n_pos_edges`` / ``n_neg_edges`` neighbors per anchor, then
    trains the embedding network on cross-entropy plus ``reg_lambda`` times the
    graph loss. ``transform`` returns the latent representation.

    With ``n_pos_generated = n_neg_generated = 0`` and ``reg_lambda = 0`` this is
    a plain MLP classifier trained with the same optimiser.
    """

    def __init__(
        self,
        n_pos_generated=5,
        n_neg_generated=20,
        n_pos_edges=1,
        n_neg_edges=4,
        graph_metric="cosine",
        reg_lambda=1.0,
        margin=1.0,
        hidden_layer_sizes=(32, 32, 16),
        epochs=300,
        batch_size=64,
        learning_rate=0.01,
        momentum=0.9,
        n_candidates=200,
        gamma=1e-2,
        noise_scale=0.1,
        standardize=True,
        random_state=0,
    ):
        self.n_pos_generated = n_pos_generated
        self.n_neg_generated = n_neg_generated
        self.n_pos_edges = n_pos_edges
        self.n_neg_edges = n_neg_edges
        self.graph_metric = graph_metric
        self.reg_lambda = reg_lambda
        self.margin = margin
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.n_candidates = n_candidates
        self.gamma = gamma
        self.noise_scale = noise_scale
        self.standardize = standardize
        self.random_state = random_state

    def _seeds(self):
        ss = np.random.SeedSequence(self.random_state)
        return [int(s.generate_state(1)[0]) for s in ss.spawn(3)]

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.label_encoder_ = LabelEncoder().fit(y)
        self.classes_ = self.label_encoder_.classes_
        y_enc = self.label_encoder_.transform(y)
        if self.standardize:
            self.mean_, self.scale_ = fit_standardizer(X)
        else:
            self.mean_, self.scale_ = np.zeros(X.shape[1]), np.ones(X.shape[1])
        Z = (X - self.mean_) / self.scale_
        aug_seed, net_seed, train_seed = self._seeds()
        aug_config = AugmentConfig(
            T=self.n_candidates,
            gamma=self.gamma,
            noise_scale=self.noise_scale,
            n_pos_total=self.n_pos_generated,
            n_neg_total=self.n_neg_generated,
            seed=aug_seed,
            svm=SvmTrainConfig(),
        )
        self.augmented_ = expand_dataset(LabeledDataset(Z, y_enc), aug_config)
        self.graph_ = build_signed_graph(
            self.augmented_, self.n_pos_edges, self.n_neg_edges, self.graph_metric
        )
        config = TrainConfig(
            hidden_layer_sizes=self.hidden_layer_sizes,
            reg_lambda=self.reg_lambda,
            margin=self.margin,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=train_seed,
        )
        net = EmbeddingNetwork(X.shape[1], self.hidden_layer_sizes, len(self.classes_), seed=net_seed)
        self.model_ = train(net, self.augmented_, self.graph_, config)
        self.n_features_in_ = X.shape[1]
        return self

    def _prepare(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) / self.scale_

    def predict_proba(self, X):
        Z = self._prepare(X)
        return self.model_.network.forward(Z)[1]

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def transform(self, X):
        Z = self._prepare(X)
        return self.model_.network.forward(Z)[0]
