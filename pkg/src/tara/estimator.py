"""Scikit-learn style wrapper around the adapter trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from tara.adapter import TrainConfig, project_and_normalize, train_arrays
from tara.validation import unpack_triplets


class EmbeddingAdapter(BaseEstimator, TransformerMixin):
    """Learns a projection that makes triplet anchors match their positives.

    fit(X) takes triplets of base embeddings, either as an
    (anchors, positives, negatives) tuple of (n, d) arrays or as a single
    (n, 3, d) array. transform(X) maps (m, d) base embeddings to unit-norm
    adapted embeddings of width ``dim_out`` (defaults to d).
    """

    def __init__(
        self,
        dim_out=None,
        tau=0.05,
        learning_rate=1e-3,
        batch_size=256,
        epochs=2,
        optimizer="adam",
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        seed=0,
    ):
        self.dim_out = dim_out
        self.tau = tau
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            tau=self.tau,
            lr=self.learning_rate,
            batch=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            dim_out=self.dim_out,
        )

    def fit(self, X, y=None):
        anchors, positives, negatives = unpack_triplets(X)
        self.params_, self.history_ = train_arrays(
            anchors, positives, negatives, self._config()
        )
        self.n_features_in_ = self.params_.dim_in
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise NotFittedError("EmbeddingAdapter must be fitted before transform")
        u = project_and_normalize(self.params_, np.asarray(X, dtype=np.float64))
        return u.astype(np.float32)
