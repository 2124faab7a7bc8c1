"""Input validation helpers shared by the estimator, trainer and CLI."""

import dataclasses

import numpy as np

from .exceptions import ConfigError, ShapeError


def check_features(X, n_features=None, name="X"):
    """Return ``X`` as a finite 2-D float64 array, optionally of a fixed width."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ShapeError(f"{name} has no rows")
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"{name} has {X.shape[1]} features, expected {n_features}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(X)


def check_labels(y, n_rows, n_classes=None, name="y"):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_rows:
        raise ShapeError(f"{name} must be a vector of length {n_rows}, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.issubdtype(y.dtype, np.number) or not np.all(y == np.round(y)):
            raise ValueError(f"{name} must hold integer class ids")
    y = y.astype(np.int64)
    if n_classes is not None and y.size:
        if y.min() < 0 or y.max() >= n_classes:
            raise ValueError(f"{name} values must lie in [0, {n_classes})")
    return y


def dataclass_from_dict(cls, data, section):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys.

    Missing keys fall back to the dataclass defaults.
    """
    if not isinstance(data, dict):
        raise ConfigError(section, f"expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown field")
    return cls(**data)
