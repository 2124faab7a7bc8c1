"""scikit-learn compatible wrapper around the MLP and its training loop."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import EpochSet
from .model import ModelConfig, build_model
from .training import TrainConfig, evaluate, train


def _as_epoch_set(X, y_encoded, class_names):
    return EpochSet(X, y_encoded, [None] * X.shape[0], tuple(class_names))


class RawMLPClassifier(ClassifierMixin, BaseEstimator):
    """Four-layer MLP (dense / batch norm / leaky ReLU x2, dense + softmax).

    Parameters mirror ``ModelConfig`` and ``TrainConfig``. Inputs are used
    as given; there is no internal scaling step beyond the network's own
    batch normalization.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
    model_ : MLP
    history_ : History
    n_features_in_ : int
    """

    def __init__(
        self,
        hidden_dims=(128, 64),
        leaky_slope=0.01,
        bn_epsilon=1e-5,
        bn_momentum=0.1,
        init_scale=0.01,
        epochs=200,
        batch_size=16,
        learning_rate=1e-3,
        beta1=0.9,
        beta2=0.999,
        adam_epsilon=1e-8,
        seed=0,
    ):
        self.hidden_dims = hidden_dims
        self.leaky_slope = leaky_slope
        self.bn_epsilon = bn_epsilon
        self.bn_momentum = bn_momentum
        self.init_scale = init_scale
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_epsilon = adam_epsilon
        self.seed = seed

    def _model_config(self, n_features, n_classes):
        return ModelConfig(
            input_dim=n_features,
            hidden_dims=tuple(self.hidden_dims),
            n_classes=n_classes,
            leaky_slope=self.leaky_slope,
            bn_epsilon=self.bn_epsilon,
            bn_momentum=self.bn_momentum,
            init_scale=self.init_scale,
            seed=self.seed,
        )

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_epsilon=self.adam_epsilon,
            seed=self.seed,
        )

    def _encode(self, y):
        lookup = {c: i for i, c in enumerate(self.classes_)}
        try:
            return np.array([lookup[v] for v in y], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} was not seen during fit") from None

    def fit(self, X, y, validation_data=None):
        """Train from scratch.

        ``validation_data`` is an optional ``(X_val, y_val)`` pair whose loss
        and accuracy are recorded in ``history_`` after each epoch.
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        if X.shape[0] < 2:
            raise ValueError(f"n_samples={X.shape[0]}: batch normalization needs at least 2 samples")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes to fit, got 1 class")
        self.n_features_in_ = X.shape[1]
        names = [str(c) for c in self.classes_]
        train_set = _as_epoch_set(X, self._encode(y), names)
        val_set = None
        if validation_data is not None:
            Xv, yv = check_X_y(*validation_data, dtype=np.float64)
            if Xv.shape[1] != self.n_features_in_:
                raise ValueError(
                    f"validation data has {Xv.shape[1]} features, X has {self.n_features_in_}"
                )
            val_set = _as_epoch_set(Xv, self._encode(yv), names)
        self.model_ = build_model(self._model_config(X.shape[1], self.classes_.size))
        self.history_ = train(self.model_, train_set, val_set, self._train_config())
        return self

    def _check_input(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} "
                f"is expecting {self.n_features_in_} features as input"
            )
        return X

    def predict_proba(self, X):
        X = self._check_input(X)
        return self.model_.predict_proba(X)

    def predict(self, X):
        X = self._check_input(X)
        return self.classes_[self.model_.predict(X)]

    def metrics(self, X, y):
        """Accuracy, confusion matrix and per-class accuracy on ``(X, y)``."""
        X = self._check_input(X)
        names = [str(c) for c in self.classes_]
        return evaluate(self.model_, _as_epoch_set(X, self._encode(y), names))
