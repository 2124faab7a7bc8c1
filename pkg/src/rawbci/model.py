"""The four-layer MLP and its text checkpoint format.

Layer stack::

    Dense(input -> h1) -> BatchNorm(h1) -> LeakyReLU
    Dense(h1 -> h2)    -> BatchNorm(h2) -> LeakyReLU
    Dense(h2 -> n_classes) -> softmax cross-entropy

Checkpoint grammar (UTF-8 text, one item per line)::

    rawbci-checkpoint
    format_version 1
    config <ModelConfig as a single-line JSON object>
    meta <single-line JSON object, e.g. {"class_names": [...]}>
    arrays <count>
    array <name> <rows> <cols>
    <rows lines, each <cols> space-separated floats in %.17g>
    ... repeated <count> times ...
    end

Array names, in order: ``dense{1,2,3}.W``, ``dense{1,2,3}.b``,
``bn{1,2}.gamma``, ``bn{1,2}.beta``, ``bn{1,2}.running_mean``,
``bn{1,2}.running_var`` (see ``MLP.named_arrays``).
"""

import dataclasses
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CallOrderError,
    CheckpointParseError,
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigError,
)
from .layers import BatchNorm, Dense, LeakyReLU, SoftmaxCrossEntropy, softmax
from .tensor import SeededRng, randn
from .validation import check_features, dataclass_from_dict

__all__ = [
    "MLP",
    "ModelConfig",
    "build_model",
    "load_checkpoint",
    "parameter_count",
    "save_checkpoint",
]

CHECKPOINT_MAGIC = "rawbci-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    input_dim: int
    hidden_dims: tuple = (128, 64)
    n_classes: int = 5
    leaky_slope: float = 0.01
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(self.hidden_dims)
        self.validate()

    def validate(self):
        def positive_int(name, value):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")

        positive_int("input_dim", self.input_dim)
        if len(self.hidden_dims) != 2:
            raise ConfigError("hidden_dims", f"needs exactly 2 entries, got {len(self.hidden_dims)}")
        for i, h in enumerate(self.hidden_dims):
            positive_int(f"hidden_dims[{i}]", h)
        positive_int("n_classes", self.n_classes)
        if self.n_classes < 2:
            raise ConfigError("n_classes", "must be >= 2")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError("leaky_slope", f"must lie in (0, 1), got {self.leaky_slope}")
        if not self.bn_epsilon > 0:
            raise ConfigError("bn_epsilon", f"must be > 0, got {self.bn_epsilon}")
        if not 0.0 <= self.bn_momentum <= 1.0:
            raise ConfigError("bn_momentum", f"must lie in [0, 1], got {self.bn_momentum}")
        if not self.init_scale >= 0:
            raise ConfigError("init_scale", f"must be >= 0, got {self.init_scale}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("seed", f"must be an integer, got {self.seed!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must fit in an unsigned 64-bit integer")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, data, section="model"):
        return dataclass_from_dict(cls, data, section)


def parameter_count(config):
    """Trainable parameter count implied by ``config`` (running stats excluded)."""
    dims = [config.input_dim, *config.hidden_dims, config.n_classes]
    dense = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    bn = sum(2 * h for h in config.hidden_dims)
    return dense + bn


class MLP:
    """Dense/BatchNorm/LeakyReLU x2 followed by a dense output and softmax loss."""

    def __init__(self, config, meta=None):
        self.config = config
        self.meta = dict(meta or {})
        c = config
        h1, h2 = c.hidden_dims
        rng = SeededRng(c.seed)
        self.dense1 = Dense(randn(rng, c.input_dim, h1, c.init_scale))
        self.bn1 = BatchNorm(h1, c.bn_epsilon, c.bn_momentum)
        self.act1 = LeakyReLU(c.leaky_slope)
        self.dense2 = Dense(randn(rng, h1, h2, c.init_scale))
        self.bn2 = BatchNorm(h2, c.bn_epsilon, c.bn_momentum)
        self.act2 = LeakyReLU(c.leaky_slope)
        self.dense3 = Dense(randn(rng, h2, c.n_classes, c.init_scale))
        self.loss = SoftmaxCrossEntropy(c.n_classes)
        self._backward_ready = False

    @property
    def layers(self):
        return [self.dense1, self.bn1, self.act1, self.dense2, self.bn2, self.act2, self.dense3]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def param_names(self):
        return [
            "dense1.W", "dense1.b", "bn1.gamma", "bn1.beta",
            "dense2.W", "dense2.b", "bn2.gamma", "bn2.beta",
            "dense3.W", "dense3.b",
        ]

    def named_arrays(self):
        """Every persisted array in checkpoint order."""
        arrays = dict(zip(self.param_names(), self.params()))
        for name, bn in (("bn1", self.bn1), ("bn2", self.bn2)):
            arrays[f"{name}.running_mean"] = bn.running_mean
            arrays[f"{name}.running_var"] = bn.running_var
        return arrays

    def expected_shapes(self):
        return {name: a.shape for name, a in self.named_arrays().items()}

    def n_parameters(self):
        return sum(p.size for p in self.params())

    def logits(self, x, training=False):
        x = check_features(x, self.config.input_dim)
        out = x
        for layer in self.layers:
            out = layer.forward(out, training=training)
        return out

    def forward(self, x, labels=None, training=False):
        """Run the full stack; returns ``(loss, probabilities)``.

        ``loss`` is None when no labels are given. A training-mode forward
        requires labels and arms ``backward``.
        """
        if training and labels is None:
            raise ValueError("a training forward needs labels")
        z = self.logits(x, training=training)
        if labels is None:
            return None, softmax(z)
        loss = self.loss.forward(z, labels, training=training)
        if training:
            self._backward_ready = True
            return loss, self.loss.cached_probabilities
        return loss, softmax(z)

    def backward(self, labels=None):
        if not self._backward_ready:
            raise CallOrderError("MLP.backward needs a preceding training-mode forward")
        self._backward_ready = False
        d = self.loss.backward(labels)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def predict_proba(self, x):
        return softmax(self.logits(x, training=False))

    def predict(self, x):
        # np.argmax returns the first maximum, i.e. ties go to the lowest class id
        return np.argmax(self.logits(x, training=False), axis=1)


def build_model(config, meta=None):
    if isinstance(config, dict):
        config = ModelConfig.from_dict(config)
    config.validate()
    return MLP(config, meta=meta)


def _format_row(row):
    return " ".join("%.17g" % v for v in row)


def save_checkpoint(model, path):
    lines = [
        CHECKPOINT_MAGIC,
        f"format_version {CHECKPOINT_VERSION}",
        "config " + json.dumps(model.config.to_dict(), sort_keys=True),
        "meta " + json.dumps(model.meta, sort_keys=True),
    ]
    arrays = model.named_arrays()
    lines.append(f"arrays {len(arrays)}")
    for name, arr in arrays.items():
        lines.append(f"array {name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(_format_row(row) for row in arr)
    lines.append("end")
    text = "\n".join(lines) + "\n"
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _expect(lines, i, prefix, path):
    if i >= len(lines):
        raise CheckpointParseError(f"{path}: unexpected end of file, expected '{prefix}'")
    line = lines[i]
    if not line.startswith(prefix):
        raise CheckpointParseError(f"{path}:{i + 1}: expected '{prefix}', got {line[:40]!r}")
    return line[len(prefix):].strip()


def load_checkpoint(path):
    """Read a checkpoint; the model is only returned if the whole file validates."""
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointParseError(f"{path}: not a rawbci checkpoint")
    if lines[-1] != "end":
        raise CheckpointParseError(f"{path}: missing 'end' trailer (truncated file?)")
    version = _expect(lines, 1, "format_version ", path)
    if version != str(CHECKPOINT_VERSION):
        raise CheckpointVersionError(
            f"{path}: format_version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    try:
        config_dict = json.loads(_expect(lines, 2, "config ", path))
        meta = json.loads(_expect(lines, 3, "meta ", path))
        n_arrays = int(_expect(lines, 4, "arrays ", path))
    except (json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointParseError):
            raise
        raise CheckpointParseError(f"{path}: bad header: {exc}") from exc
    try:
        config = ModelConfig.from_dict(config_dict, section="checkpoint.config")
    except (ConfigError, TypeError) as exc:
        raise CheckpointShapeError(f"{path}: invalid config: {exc}") from exc

    arrays = {}
    i = 5
    for _ in range(n_arrays):
        header = _expect(lines, i, "array ", path).split()
        if len(header) != 3:
            raise CheckpointParseError(f"{path}:{i + 1}: malformed array header")
        name = header[0]
        try:
            rows, cols = int(header[1]), int(header[2])
        except ValueError as exc:
            raise CheckpointParseError(f"{path}:{i + 1}: bad array dims") from exc
        i += 1
        if i + rows > len(lines):
            raise CheckpointParseError(f"{path}: unexpected end of file inside array {name}")
        data = np.empty((rows, cols))
        for r in range(rows):
            tokens = lines[i + r].split()
            if len(tokens) != cols:
                raise CheckpointShapeError(
                    f"{path}:{i + r + 1}: array {name} row has {len(tokens)} values, declared {cols}"
                )
            try:
                data[r] = [float(tok) for tok in tokens]
            except ValueError as exc:
                raise CheckpointParseError(
                    f"{path}:{i + r + 1}: non-numeric value in array {name}"
                ) from exc
        arrays[name] = data
        i += rows
    if i >= len(lines) or lines[i] != "end":
        raise CheckpointParseError(f"{path}: missing 'end' trailer (truncated file?)")
    if i + 1 != len(lines):
        raise CheckpointParseError(f"{path}:{i + 2}: trailing content after 'end'")

    model = MLP(config, meta=meta)
    expected = model.expected_shapes()
    if set(arrays) != set(expected):
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        raise CheckpointShapeError(f"{path}: array set mismatch (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CheckpointShapeError(
                f"{path}: array {name} has shape {arrays[name].shape}, config implies {shape}"
            )
    for name, target in model.named_arrays().items():
        target[...] = arrays[name]
    return model
