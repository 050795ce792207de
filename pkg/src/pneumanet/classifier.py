"""scikit-learn style wrapper around the CNN so the pipeline composes with
the wider ecosystem (get_params / fit / predict / predict_proba / score)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import network
from .network import CnnArchitecture, ConvBlock
from .validation import check_binary_labels, check_image_batch, require


class PneumoniaCnnClassifier(BaseEstimator, ClassifierMixin):
    """Binary chest X-ray classifier over (n, size, size, 1) arrays in [0, 1].

    Labels are 0 (normal) and 1 (pneumonia, the positive class). A fraction
    of the training data is held out per class for early stopping on
    validation accuracy.
    """

    def __init__(self, image_size=148, filters=(32, 64), kernel_size=3, epochs=20,
                 batch_size=32, learning_rate=1e-3, patience=5,
                 validation_fraction=0.1, seed=0):
        self.image_size = image_size
        self.filters = filters
        self.kernel_size = kernel_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _architecture(self) -> CnnArchitecture:
        blocks = tuple(ConvBlock(f, kernel_size=self.kernel_size) for f in self.filters)
        return CnnArchitecture(
            input_shape=(self.image_size, self.image_size, 1), blocks=blocks
        ).validate()

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_image_batch(X, self.image_size)
        y = check_binary_labels(y, X.shape[0])
        if X_val is None:
            X, y, X_val, y_val = self._hold_out(X, y)
        else:
            X_val = check_image_batch(X_val, self.image_size)
            y_val = check_binary_labels(y_val, X_val.shape[0])

        model = network.build_model(self._architecture(), seed=self.seed)
        stopper = network.EarlyStopping(patience=self.patience)
        self.history_ = network.train(
            model, (X, y), (X_val, y_val),
            epochs=self.epochs, batch_size=self.batch_size,
            early_stop=stopper, seed=self.seed,
        )
        self.model_ = model
        self.classes_ = np.array([0, 1])
        return self

    def _hold_out(self, X, y):
        """Per-class split of a validation slice, seeded and stratified."""
        rng = np.random.default_rng(self.seed)
        val_idx = []
        for cls in (0, 1):
            members = np.flatnonzero(y == cls)
            require(len(members) >= 2, f"need at least 2 samples of class {cls}")
            n_val = max(1, int(len(members) * self.validation_fraction))
            val_idx.extend(rng.permutation(members)[:n_val].tolist())
        val_mask = np.zeros(len(y), dtype=bool)
        val_mask[val_idx] = True
        return X[~val_mask], y[~val_mask], X[val_mask], y[val_mask]

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this classifier has not been fitted yet")

    def predict_proba(self, X):
        self._check_fitted()
        X = check_image_batch(X, self.image_size)
        p = network.evaluate_probs(self.model_, X)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return self.predict_proba(X)[:, 1]

    def predict(self, X):
        p = self.predict_proba(X)[:, 1]
        return (p >= network.DECISION_THRESHOLD).astype(np.int64)

    def score(self, X, y):
        y = check_binary_labels(y)
        return float((self.predict(X) == y).mean())
