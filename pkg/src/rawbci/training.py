"""Mini-batch training, evaluation and run-history export."""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .optim import Adam
from .tensor import SeededRng, derive_seed
from .validation import check_labels, dataclass_from_dict

__all__ = ["History", "Metrics", "TrainConfig", "evaluate", "export_history", "train"]

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
# distinguishes the shuffle stream from other uses of the run seed
_SHUFFLE_STREAM = 0x5348


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    split_ratios: tuple = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        self.split_ratios = tuple(self.split_ratios)
        self.validate()

    def validate(self):
        if isinstance(self.epochs, bool) or not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError("train.epochs", f"must be an integer >= 1, got {self.epochs!r}")
        if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int) or self.batch_size < 2:
            raise ConfigError("train.batch_size", f"must be an integer >= 2, got {self.batch_size!r}")
        if not self.learning_rate > 0:
            raise ConfigError("train.learning_rate", "must be > 0")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"train.{name}", "must lie in [0, 1)")
        if not self.adam_epsilon > 0:
            raise ConfigError("train.adam_epsilon", "must be > 0")
        if len(self.split_ratios) != 3 or any(not r > 0 for r in self.split_ratios):
            raise ConfigError("train.split_ratios", "must be three positive numbers")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError("train.split_ratios", "must sum to 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("train.seed", "must fit in an unsigned 64-bit integer")

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "split_ratios": list(self.split_ratios),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data, section="train"):
        return dataclass_from_dict(cls, data, section)


@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray
    n_samples: int

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": [None if np.isnan(a) else float(a) for a in self.per_class_accuracy],
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes):
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.size == 0:
            raise ShapeError("cannot compute metrics on an empty set")
        confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(confusion, (y_true, y_pred), 1)
        support = confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            per_class = np.where(support > 0, np.diag(confusion) / support, np.nan)
        return cls(
            accuracy=float(np.trace(confusion)) / y_true.size,
            confusion=confusion,
            per_class_accuracy=per_class,
            n_samples=int(y_true.size),
        )


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def append(self, train_loss, train_acc, val_loss, val_acc):
        self.train_loss.append(train_loss)
        self.train_acc.append(train_acc)
        self.val_loss.append(val_loss)
        self.val_acc.append(val_acc)

    def rows(self):
        for e in range(len(self)):
            yield e + 1, self.train_loss[e], self.train_acc[e], self.val_loss[e], self.val_acc[e]


def _check_set(model, epoch_set, name):
    if len(epoch_set) == 0:
        raise ShapeError(f"{name} set is empty")
    if epoch_set.n_features != model.config.input_dim:
        raise ShapeError(
            f"{name} set has {epoch_set.n_features} features, model expects {model.config.input_dim}"
        )
    check_labels(epoch_set.labels, len(epoch_set), model.config.n_classes, name=f"{name} labels")


def _loss_and_accuracy(model, features, labels):
    loss, probs = model.forward(features, labels, training=False)
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    return loss, acc


def batch_slices(n, batch_size):
    """Full batches plus the remainder, unless the remainder is a single row."""
    slices = [slice(i, i + batch_size) for i in range(0, n - batch_size + 1, batch_size)]
    tail = n % batch_size
    if tail >= 2:
        slices.append(slice(n - tail, n))
    return slices


def train(model, train_set, val_set, config, optimizer=None, callback=None):
    """Train ``model`` in place and return its per-epoch ``History``.

    Epoch ``e`` (0-based) shuffles with ``SeededRng(derive_seed(seed, S, e))``
    where ``S`` is a fixed stream tag, so any epoch's batch order can be
    rebuilt on its own. Train and validation metrics are computed in
    inference mode after each epoch.
    """
    config.validate()
    _check_set(model, train_set, "train")
    if val_set is not None:
        _check_set(model, val_set, "validation")
    if optimizer is None:
        optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_epsilon)
    X, y = train_set.features, train_set.labels
    n = X.shape[0]
    if n < 2:
        raise ShapeError("training needs at least 2 epochs of data for batch normalization")
    params = model.params()
    history = History()
    for epoch in range(config.epochs):
        order = SeededRng(derive_seed(config.seed, _SHUFFLE_STREAM, epoch)).permutation(n)
        for sl in batch_slices(n, config.batch_size):
            idx = order[sl]
            model.forward(X[idx], y[idx], training=True)
            model.backward()
            optimizer.step(params, model.grads())
        tr_loss, tr_acc = _loss_and_accuracy(model, X, y)
        if val_set is not None:
            va_loss, va_acc = _loss_and_accuracy(model, val_set.features, val_set.labels)
        else:
            va_loss, va_acc = float("nan"), float("nan")
        history.append(tr_loss, tr_acc, va_loss, va_acc)
        if callback is not None:
            callback(epoch, history)
    return history


def evaluate(model, epoch_set):
    if len(epoch_set) == 0:
        raise ShapeError("cannot evaluate on an empty set")
    if epoch_set.n_features != model.config.input_dim:
        raise ShapeError(
            f"set has {epoch_set.n_features} features, model expects {model.config.input_dim}"
        )
    y_pred = model.predict(epoch_set.features)
    return Metrics.from_predictions(epoch_set.labels, y_pred, model.config.n_classes)


def export_history(history, metrics, path_prefix, config=None, seed=None, extra=None):
    """Write ``<prefix>_history.csv`` and ``<prefix>_metrics.json``.

    Floats in the CSV use ``repr`` so files are lossless and byte-stable.
    Returns the two paths.
    """
    hist_path = f"{path_prefix}_history.csv"
    metrics_path = f"{path_prefix}_metrics.json"
    parent = os.path.dirname(os.path.abspath(hist_path))
    try:
        os.makedirs(parent, exist_ok=True)
        with open(hist_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HISTORY_COLUMNS)
            for epoch, *values in history.rows():
                writer.writerow([epoch] + [repr(float(v)) for v in values])
    except OSError as exc:
        raise OSError(f"cannot write history to {hist_path}: {exc}") from exc
    payload = {"metrics": metrics.to_dict(), "config": config, "seed": seed}
    if extra:
        payload.update(extra)
    try:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write metrics to {metrics_path}: {exc}") from exc
    return hist_path, metrics_path
