"""Small differentiable classifiers used by every role in the federation.

Two families are supported: multinomial logistic regression (``arch=[in, out]``)
and tanh MLPs (``arch=[in, hidden, ..., out]``). Parameters live in one flat
float64 vector; ``layer_map`` records where each weight matrix and bias vector
sits so perturbations can be generated and shipped layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "Batch",
    "ParameterVector",
    "backprop_gradient",
    "build_layer_map",
    "forward_loss",
    "init_model",
    "predict",
]


@dataclass(frozen=True)
class ParameterVector:
    values: np.ndarray
    layer_map: tuple[tuple[int, int], ...]
    arch: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ShapeError(f"parameter values must be 1-D, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        expected = build_layer_map(self.arch)
        if tuple(self.layer_map) != expected:
            raise ShapeError("layer_map does not match arch")
        if values.size != _count(self.arch):
            raise ShapeError(f"expected {_count(self.arch)} values for arch {self.arch}, got {values.size}")

    @property
    def d(self) -> int:
        return self.values.size

    @property
    def num_layers(self) -> int:
        return len(self.layer_map)

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(np.array(values, dtype=np.float64), self.layer_map, self.arch)

    def copy(self) -> "ParameterVector":
        return self.with_values(self.values.copy())

    def unpack(self, values=None):
        """Return ``[(W, b), ...]`` views into ``values`` (defaults to own values)."""
        v = self.values if values is None else values
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(self.arch[:-1], self.arch[1:])):
            w_off, w_len = self.layer_map[2 * k]
            b_off, b_len = self.layer_map[2 * k + 1]
            layers.append((v[w_off:w_off + w_len].reshape(fan_in, fan_out), v[b_off:b_off + b_len]))
        return layers


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels)
        if x.ndim != 2:
            raise ShapeError(f"inputs must be a (B, features) matrix, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ShapeError("labels must be a vector with one entry per input row")
        if x.shape[0] < 1:
            raise ShapeError("batch must contain at least one example")
        if not np.issubdtype(y.dtype, np.integer):
            raise ShapeError("labels must be integers")
        if y.min() < 0:
            raise ShapeError("labels must be nonnegative")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def _validate_arch(arch) -> tuple[int, ...]:
    try:
        arch = tuple(int(a) for a in arch)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"arch must be a sequence of integers, got {arch!r}", "model.arch") from exc
    if len(arch) < 2:
        raise ConfigError("arch needs at least an input and an output size", "model.arch")
    if min(arch) < 1:
        raise ConfigError(f"all arch dimensions must be >= 1, got {arch}", "model.arch")
    return arch


def _count(arch) -> int:
    return sum(i * o + o for i, o in zip(arch[:-1], arch[1:]))


def build_layer_map(arch) -> tuple[tuple[int, int], ...]:
    """Weight then bias segment for each dense layer, in order."""
    arch = _validate_arch(arch)
    segments = []
    offset = 0
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        for length in (fan_in * fan_out, fan_out):
            segments.append((offset, length))
            offset += length
    return tuple(segments)


def init_model(arch, seed: int) -> ParameterVector:
    """Deterministic init: weights ~ N(0, 1/fan_in) * 0.1, biases zero."""
    arch = _validate_arch(arch)
    rng = np.random.default_rng(seed)
    values = np.zeros(_count(arch))
    layer_map = build_layer_map(arch)
    for k, (fan_in, _) in enumerate(zip(arch[:-1], arch[1:])):
        off, length = layer_map[2 * k]
        values[off:off + length] = rng.standard_normal(length) * (0.1 / np.sqrt(fan_in))
    return ParameterVector(values, layer_map, arch)


def _check(params: ParameterVector, batch: Batch):
    if batch.inputs.shape[1] != params.arch[0]:
        raise ShapeError(f"batch has {batch.inputs.shape[1]} features but model expects {params.arch[0]}")
    if batch.labels.max() >= params.arch[-1]:
        raise ShapeError(f"label {batch.labels.max()} out of range for {params.arch[-1]} classes")


def _forward(layers, x):
    """Return the logits plus hidden activations needed for backprop."""
    acts = [x]
    h = x
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        if k < len(layers) - 1:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    return h, acts


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(params: ParameterVector, batch: Batch, values=None) -> float:
    """Mean cross-entropy of the model on ``batch``.

    ``values`` overrides ``params.values`` without building a new
    ParameterVector, which keeps perturbed evaluations cheap.
    """
    _check(params, batch)
    logits, _ = _forward(params.unpack(values), batch.inputs)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(batch.size), batch.labels].mean())


def predict(params: ParameterVector, inputs, values=None) -> np.ndarray:
    logits, _ = _forward(params.unpack(values), np.asarray(inputs, dtype=np.float64))
    return logits.argmax(axis=1)


def backprop_gradient(params: ParameterVector, batch: Batch, values=None) -> np.ndarray:
    """Exact gradient of :func:`forward_loss` with respect to the flat parameters."""
    _check(params, batch)
    v = params.values if values is None else values
    layers = params.unpack(v)
    logits, acts = _forward(layers, batch.inputs)
    probs = np.exp(_log_softmax(logits))
    delta = probs
    delta[np.arange(batch.size), batch.labels] -= 1.0
    delta /= batch.size

    grad = np.zeros_like(v)
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        w_off, w_len = params.layer_map[2 * k]
        b_off, b_len = params.layer_map[2 * k + 1]
        grad[w_off:w_off + w_len] = (acts[k].T @ delta).ravel()
        grad[b_off:b_off + b_len] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ w.T) * (1.0 - acts[k] ** 2)
    return grad
