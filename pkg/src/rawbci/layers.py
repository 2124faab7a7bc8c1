"""Layers with hand-written forward and backward passes.

Each layer caches what its backward pass needs during a training forward.
A backward call consumes the cache, so a second backward without a fresh
forward raises ``CallOrderError`` instead of reusing stale values.
Inference-mode forwards (``training=False``) never write to the layer.
"""

import numpy as np

from .exceptions import CallOrderError, ShapeError
from .tensor import add_row_broadcast, as_matrix, col_mean, col_var, matmul

__all__ = ["BatchNorm", "Dense", "LeakyReLU", "SoftmaxCrossEntropy", "softmax"]


class Dense:
    """Fully connected layer ``y = x @ W + b``."""

    def __init__(self, W, b=None):
        self.W = as_matrix(W, "W").copy()
        in_dim, out_dim = self.W.shape
        self.b = np.zeros((1, out_dim)) if b is None else as_matrix(b, "b").copy()
        if self.b.shape != (1, out_dim):
            raise ShapeError(f"bias shape {self.b.shape} does not match W {self.W.shape}")
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b)
        self.cached_input = None

    @property
    def in_dim(self):
        return self.W.shape[0]

    @property
    def out_dim(self):
        return self.W.shape[1]

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.grad_W, self.grad_b]

    def forward(self, x, training=True):
        x = as_matrix(x, "x")
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"dense layer expects {self.in_dim} input features, got {x.shape[1]}")
        if training:
            self.cached_input = x
        return add_row_broadcast(matmul(x, self.W), self.b)

    def backward(self, d_out):
        if self.cached_input is None:
            raise CallOrderError("Dense.backward called without a preceding training forward")
        d_out = as_matrix(d_out, "d_out")
        x = self.cached_input
        if d_out.shape != (x.shape[0], self.out_dim):
            raise ShapeError(f"d_out shape {d_out.shape} != {(x.shape[0], self.out_dim)}")
        self.grad_W[...] = x.T @ d_out
        self.grad_b[...] = d_out.sum(axis=0, keepdims=True)
        self.cached_input = None
        return d_out @ self.W.T


class BatchNorm:
    """Batch normalization over the feature axis.

    Training mode normalizes with the batch mean and population variance and
    updates ``running = (1 - momentum) * running + momentum * batch``.
    Inference mode normalizes with the running statistics.
    """

    def __init__(self, dim, epsilon=1e-5, momentum=0.1):
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        if not 0.0 <= momentum <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {momentum}")
        self.dim = int(dim)
        self.epsilon = float(epsilon)
        self.momentum = float(momentum)
        self.gamma = np.ones((1, self.dim))
        self.beta = np.zeros((1, self.dim))
        self.running_mean = np.zeros((1, self.dim))
        self.running_var = np.ones((1, self.dim))
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.grad_gamma, self.grad_beta]

    def forward(self, x, training=True):
        x = as_matrix(x, "x")
        if x.shape[1] != self.dim:
            raise ShapeError(f"batch norm expects {self.dim} features, got {x.shape[1]}")
        if not training:
            x_hat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
            return x_hat * self.gamma + self.beta
        if x.shape[0] < 2:
            raise ShapeError("batch norm training needs a batch of at least 2 rows")
        mean = col_mean(x)
        var = col_var(x)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std)
        m = self.momentum
        self.running_mean = (1.0 - m) * self.running_mean + m * mean
        self.running_var = (1.0 - m) * self.running_var + m * var
        return x_hat * self.gamma + self.beta

    def backward(self, d_out):
        if self._cache is None:
            raise CallOrderError("BatchNorm.backward called without a preceding training forward")
        x_hat, inv_std = self._cache
        d_out = as_matrix(d_out, "d_out")
        if d_out.shape != x_hat.shape:
            raise ShapeError(f"d_out shape {d_out.shape} != {x_hat.shape}")
        self.grad_beta[...] = d_out.sum(axis=0, keepdims=True)
        self.grad_gamma[...] = (d_out * x_hat).sum(axis=0, keepdims=True)
        d_xhat = d_out * self.gamma
        # mean and variance both depend on every row of the batch
        d_x = inv_std * (
            d_xhat
            - d_xhat.mean(axis=0, keepdims=True)
            - x_hat * (d_xhat * x_hat).mean(axis=0, keepdims=True)
        )
        self._cache = None
        return d_x


class LeakyReLU:
    def __init__(self, slope=0.01):
        if not 0.0 < slope < 1.0:
            raise ValueError(f"leaky slope must lie strictly in (0, 1), got {slope}")
        self.slope = float(slope)
        self.cached_input = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x, training=True):
        x = as_matrix(x, "x")
        if training:
            self.cached_input = x
        return np.where(x >= 0, x, self.slope * x)

    def backward(self, d_out):
        if self.cached_input is None:
            raise CallOrderError("LeakyReLU.backward called without a preceding training forward")
        d_out = as_matrix(d_out, "d_out")
        x = self.cached_input
        self.cached_input = None
        return np.where(x >= 0, d_out, self.slope * d_out)


def softmax(logits):
    """Row-wise softmax with the row maximum subtracted first."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, n_rows, n_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != n_rows:
        raise ShapeError(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"label {labels[i]} at row {i} outside [0, {n_classes})")
    return labels


class SoftmaxCrossEntropy:
    """Softmax followed by mean negative log-likelihood."""

    def __init__(self, n_classes):
        self.n_classes = int(n_classes)
        self.cached_probabilities = None
        self._cached_labels = None

    def forward(self, logits, labels, training=True):
        logits = as_matrix(logits, "logits")
        if logits.shape[1] != self.n_classes:
            raise ShapeError(f"expected {self.n_classes} logit columns, got {logits.shape[1]}")
        labels = _check_labels(labels, logits.shape[0], self.n_classes)
        z = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=1))
        probs = np.exp(z - log_norm[:, None])
        rows = np.arange(logits.shape[0])
        loss = float(np.mean(log_norm - z[rows, labels]))
        if training:
            self.cached_probabilities = probs
            self._cached_labels = labels
        return loss

    def backward(self, labels=None):
        if self.cached_probabilities is None:
            raise CallOrderError("SoftmaxCrossEntropy.backward called without a preceding forward")
        probs = self.cached_probabilities
        if labels is None:
            labels = self._cached_labels
        labels = _check_labels(labels, probs.shape[0], self.n_classes)
        grad = probs.copy()
        grad[np.arange(probs.shape[0]), labels] -= 1.0
        grad /= probs.shape[0]
        self.cached_probabilities = None
        self._cached_labels = None
        return grad
