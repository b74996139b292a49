"""scikit-learn style wrappers around the neural models."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..data import State
from ..validation import as_labels, as_window_array, check_shape, feature_stats
from .models import ModelSpec, NeuralModel, build_model
from .training import TrainConfig, predict_from_proba, train_model


class NeuralClassifier(BaseEstimator, ClassifierMixin):
    """Neural window classifier.

    ``kind`` selects FCN, RESNET or FCN_LSTM.  FCN_LSTM expects 4-D input
    (n, sequence, time, features); the others take (n, time, features).
    Inputs are z-scored per feature with training statistics.
    """

    def __init__(self, kind="FCN", random_state=0, batch_size=32, max_epochs=100, lr=1e-3,
                 beta1=0.9, beta2=0.999, eps=1e-8, patience=20, restore_best=True,
                 class_weights=None, fcn_filters=(128, 256, 128), resnet_filters=(64, 128, 128),
                 lstm_hidden=(128, 128), standardize_input=True):
        self.kind = kind
        self.random_state = random_state
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.patience = patience
        self.restore_best = restore_best
        self.class_weights = class_weights
        self.fcn_filters = fcn_filters
        self.resnet_filters = resnet_filters
        self.lstm_hidden = lstm_hidden
        self.standardize_input = standardize_input

    @property
    def _ndim(self):
        return 4 if self.kind == "FCN_LSTM" else 3

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.random_state, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, lr=self.lr, beta1=self.beta1,
                           beta2=self.beta2, eps=self.eps, patience=self.patience,
                           restore_best=self.restore_best,
                           class_weights=None if self.class_weights is None else tuple(self.class_weights))

    def fit(self, X, y, X_val=None, y_val=None):
        X = as_window_array(X, self._ndim)
        y = as_labels(y, len(X))
        spec = ModelSpec(kind=self.kind, channels=X.shape[-1], length=X.shape[-2],
                         seq_len=X.shape[1] if self._ndim == 4 else 4,
                         fcn_filters=self.fcn_filters, resnet_filters=self.resnet_filters,
                         lstm_hidden=self.lstm_hidden)
        model = build_model(spec, self.random_state)
        if self.standardize_input:
            model.input_mean, model.input_std = feature_stats(X)
        if X_val is not None and len(X_val):
            X_val = as_window_array(X_val, self._ndim, "X_val")
            y_val = as_labels(y_val, len(X_val))
        else:
            X_val = y_val = None
        train_model(model, X, y, X_val, y_val, self.train_config())
        self.model_ = model
        self.classes_ = np.array([State.FOCUSED, State.DISTRACTED])
        return self

    @classmethod
    def from_model(cls, model: NeuralModel) -> "NeuralClassifier":
        est = cls(kind=model.spec.kind, fcn_filters=model.spec.fcn_filters,
                  resnet_filters=model.spec.resnet_filters, lstm_hidden=model.spec.lstm_hidden)
        est.model_ = model
        est.classes_ = np.array([State.FOCUSED, State.DISTRACTED])
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = as_window_array(X, self._ndim)
        check_shape(X, self.model_.spec.input_shape, type(self).__name__)
        # one sample per forward pass: results must not depend on batch composition
        return np.concatenate([self.model_.predict_proba(X[i:i + 1]) for i in range(len(X))])

    def predict(self, X):
        return predict_from_proba(self.predict_proba(X))

    @property
    def history_(self):
        return self.model_.history

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)

    @classmethod
    def load(cls, path):
        return cls.from_model(NeuralModel.load(path))


class FCNClassifier(NeuralClassifier):
    def __init__(self, random_state=0, batch_size=32, max_epochs=100, lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8, patience=20, restore_best=True, class_weights=None,
                 fcn_filters=(128, 256, 128), standardize_input=True):
        super().__init__("FCN", random_state, batch_size, max_epochs, lr, beta1, beta2, eps,
                         patience, restore_best, class_weights, fcn_filters=fcn_filters,
                         standardize_input=standardize_input)


class ResNetClassifier(NeuralClassifier):
    def __init__(self, random_state=0, batch_size=32, max_epochs=100, lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8, patience=20, restore_best=True, class_weights=None,
                 resnet_filters=(64, 128, 128), standardize_input=True):
        super().__init__("RESNET", random_state, batch_size, max_epochs, lr, beta1, beta2, eps,
                         patience, restore_best, class_weights, resnet_filters=resnet_filters,
                         standardize_input=standardize_input)


class FCNLSTMClassifier(NeuralClassifier):
    def __init__(self, random_state=0, batch_size=32, max_epochs=100, lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8, patience=20, restore_best=True, class_weights=None,
                 fcn_filters=(128, 256, 128), lstm_hidden=(128, 128), standardize_input=True):
        super().__init__("FCN_LSTM", random_state, batch_size, max_epochs, lr, beta1, beta2, eps,
                         patience, restore_best, class_weights, fcn_filters=fcn_filters,
                         lstm_hidden=lstm_hidden, standardize_input=standardize_input)
