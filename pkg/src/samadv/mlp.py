"""Small dense classifiers with exact parameter and input gradients.

Everything here is plain float64 numpy. A model is an immutable stack of
dense layers; the last layer emits logits, every earlier layer is followed
by its configured activation. ``forward`` records what ``backward`` needs,
and ``backward`` returns analytic gradients of the mean cross-entropy with
respect to both the parameters (for training and weight perturbation) and
the inputs (for input-space attacks) in a single pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericError, UsageError

ACTIVATIONS = ("relu", "identity")


def _frozen_array(value, dtype, name: str) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LayerParams:
    """One dense layer: ``weights`` is (n_in, n_out), ``bias`` is (n_out,).

    Also used as the value carrier for layer-shaped gradients. Arrays are
    copied and marked read-only, so a constructed layer cannot be mutated
    in place.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights, np.float64, "weights")
        b = _frozen_array(self.bias, np.float64, "bias")
        if w.ndim != 2:
            raise ConfigurationError(f"weights must be 2-d, got shape {w.shape}")
        if b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ConfigurationError(
                f"bias shape {b.shape} does not match weights shape {w.shape}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """A stack of dense layers plus one activation name per hidden layer.

    ``activations`` has length ``len(layers) - 1``; a single layer (no hidden
    activation) is a valid linear classifier.
    """

    layers: tuple[LayerParams, ...]
    activations: tuple[str, ...] = ()

    def __post_init__(self):
        layers = tuple(self.layers)
        acts = tuple(self.activations)
        if not layers:
            raise ConfigurationError("a model needs at least one layer")
        if len(acts) != len(layers) - 1:
            raise ConfigurationError(
                f"got {len(acts)} activations for {len(layers)} layers; "
                "expected one per hidden layer"
            )
        for a in acts:
            if a not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {a!r}; use one of {ACTIVATIONS}")
        for k in range(len(layers) - 1):
            if layers[k].n_out != layers[k + 1].n_in:
                raise ConfigurationError(
                    f"layer {k} emits {layers[k].n_out} features but layer {k + 1} "
                    f"expects {layers[k + 1].n_in}"
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "activations", acts)

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_in

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].n_out


@dataclass(frozen=True)
class Batch:
    """Inputs (n_samples, n_features) and integer class labels (n_samples,)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = _frozen_array(self.inputs, np.float64, "inputs")
        y = np.array(self.labels, dtype=np.int64)
        y.setflags(write=False)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ConfigurationError(f"inputs must be (n>=1, d), got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ConfigurationError(
                f"labels shape {y.shape} does not match {x.shape[0]} samples"
            )
        if y.min() < 0:
            raise ConfigurationError("labels must be non-negative class indices")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class ForwardCache:
    """Forward record consumed by ``backward``; opaque to other callers."""

    model: ModelParams
    inputs: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    hidden_activations: tuple[np.ndarray, ...]

    @property
    def logits(self) -> np.ndarray:
        return self.pre_activations[-1]


@dataclass(frozen=True)
class GradientBundle:
    """Parameter gradients (mirroring the model layout), input gradients
    (mirroring the batch inputs) and the loss they belong to."""

    param_grads: tuple[LayerParams, ...]
    input_grads: np.ndarray
    loss: float

    def __post_init__(self):
        if not np.isfinite(self.loss):
            raise NumericError("loss is not finite")


def init_mlp(
    layer_sizes: Sequence[int],
    rng: np.random.Generator,
    activation: str | Sequence[str] = "relu",
) -> ModelParams:
    """Build a model with He-scaled Gaussian weights and zero biases.

    ``layer_sizes`` runs from input width to output width, e.g. (51, 32, 2).
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigurationError(f"layer_sizes must be >=2 positive ints, got {layer_sizes}")
    n_hidden = len(sizes) - 2
    if isinstance(activation, str):
        acts = (activation,) * n_hidden
    else:
        acts = tuple(activation)
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
        layers.append(LayerParams(w, np.zeros(n_out)))
    return ModelParams(tuple(layers), acts)


def _apply_activation(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(model: ModelParams, batch: Batch) -> tuple[np.ndarray, ForwardCache]:
    """Run the model on a batch; returns logits and the record for backward.

    Pure and deterministic: identical inputs give bit-identical outputs.
    """
    if batch.inputs.shape[1] != model.n_inputs:
        raise ConfigurationError(
            f"layer 0 expects {model.n_inputs} input features, "
            f"batch has {batch.inputs.shape[1]}"
        )
    a = batch.inputs
    pre, hidden = [], []
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers):
        z = a @ layer.weights + layer.bias
        pre.append(z)
        if k < last:
            a = _apply_activation(z, model.activations[k])
            hidden.append(a)
    cache = ForwardCache(model, batch.inputs, tuple(pre), tuple(hidden))
    return pre[-1], cache


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    # max-shift keeps exp() in range for logit magnitudes up to ~1e300
    shift = logits - logits.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ConfigurationError(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{y.min()}, {y.max()}]"
        )
    return y


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-softmax probability of the true class."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericError("logits contain non-finite entries")
    y = _check_labels(labels, logits.shape[1])
    logp = _log_softmax(logits)
    return float(-logp[np.arange(logits.shape[0]), y].mean())


def backward(model: ModelParams, cache: ForwardCache, labels: np.ndarray) -> GradientBundle:
    """Exact gradients of the mean cross-entropy at the cached forward pass.

    The cache must come from ``forward`` on the same model object; model
    arrays are read-only, so a cache can only go stale by pairing it with a
    different model.
    """
    if cache.model is not model:
        raise UsageError("cache was produced by a different model than the one passed")
    y = _check_labels(labels, model.n_outputs)
    n = cache.inputs.shape[0]
    if y.shape != (n,):
        raise UsageError(f"labels shape {y.shape} does not match cached batch of {n}")

    logits = cache.logits
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    loss = cross_entropy(logits, y)

    grads: list[LayerParams] = [None] * len(model.layers)  # type: ignore[list-item]
    for k in range(len(model.layers) - 1, -1, -1):
        a_prev = cache.inputs if k == 0 else cache.hidden_activations[k - 1]
        grads[k] = LayerParams(a_prev.T @ delta, delta.sum(axis=0))
        delta = delta @ model.layers[k].weights.T
        if k > 0 and model.activations[k - 1] == "relu":
            delta = delta * (cache.pre_activations[k - 1] > 0)
    input_grads = delta
    if not np.all(np.isfinite(input_grads)):
        raise NumericError("input gradients contain non-finite entries")
    return GradientBundle(tuple(grads), input_grads, loss)


def predict_classes(model: ModelParams, inputs: np.ndarray) -> np.ndarray:
    """Argmax class indices for a matrix of inputs."""
    logits, _ = forward(model, Batch(inputs, np.zeros(len(inputs), dtype=np.int64)))
    return logits.argmax(axis=1)


def accuracy(model: ModelParams, inputs: np.ndarray, labels: np.ndarray) -> float:
    return float((predict_classes(model, inputs) == np.asarray(labels)).mean())
