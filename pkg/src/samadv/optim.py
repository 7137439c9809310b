"""Parameter-update rules: SGD with momentum/weight decay, the two-pass
sharpness-aware step, and a stepwise learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, UsageError
from .mlp import Batch, GradientBundle, LayerParams, ModelParams, backward, forward

# grad_fn(model) -> (loss, layer-shaped grads); lets the sharpness-aware step
# run against any differentiable objective, not just batch cross-entropy
GradFn = Callable[[ModelParams], tuple[float, tuple[LayerParams, ...]]]


@dataclass(frozen=True)
class SgdConfig:
    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        # lr = 0 is legal: it turns any step into a pure no-op on the
        # parameters, which the perturbation-restoration tests rely on
        if self.lr < 0:
            raise ConfigurationError(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class SamConfig:
    """``rho`` is the weight-perturbation radius; ``lam`` adds an explicit
    2*lam*w term to the descent gradient. rho=0 reduces exactly to plain SGD."""

    rho: float
    lam: float = 0.0

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigurationError(f"rho must be >= 0, got {self.rho}")
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    milestones: tuple[int, ...] = ()
    decay_factor: float = 0.1

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ConfigurationError(f"base_lr must be > 0, got {self.base_lr}")
        ms = tuple(int(m) for m in self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigurationError(f"milestones must be strictly increasing, got {ms}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigurationError(
                f"decay_factor must be in (0, 1], got {self.decay_factor}"
            )
        object.__setattr__(self, "milestones", ms)


@dataclass(frozen=True)
class MomentumState:
    velocities: tuple[LayerParams, ...]


def zero_state(model: ModelParams) -> MomentumState:
    return MomentumState(
        tuple(LayerParams(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.layers)
    )


def _check_shapes(model: ModelParams, grads: tuple[LayerParams, ...]) -> None:
    if len(grads) != len(model.layers):
        raise UsageError(f"got {len(grads)} gradient layers for {len(model.layers)} model layers")
    for k, (layer, g) in enumerate(zip(model.layers, grads)):
        if layer.weights.shape != g.weights.shape or layer.bias.shape != g.bias.shape:
            raise UsageError(f"gradient shape mismatch at layer {k}")


def sgd_step(
    params: ModelParams,
    grads: tuple[LayerParams, ...],
    state: MomentumState,
    cfg: SgdConfig,
) -> tuple[ModelParams, MomentumState]:
    """v <- momentum*v + (g + weight_decay*w);  w <- w - lr*v."""
    _check_shapes(params, grads)
    new_layers, new_vel = [], []
    for layer, g, v in zip(params.layers, grads, state.velocities):
        gw = g.weights + cfg.weight_decay * layer.weights if cfg.weight_decay else g.weights
        gb = g.bias + cfg.weight_decay * layer.bias if cfg.weight_decay else g.bias
        vw = cfg.momentum * v.weights + gw
        vb = cfg.momentum * v.bias + gb
        new_vel.append(LayerParams(vw, vb))
        new_layers.append(LayerParams(layer.weights - cfg.lr * vw, layer.bias - cfg.lr * vb))
    return ModelParams(tuple(new_layers), params.activations), MomentumState(tuple(new_vel))


def grad_norm(grads: tuple[LayerParams, ...]) -> float:
    """Global l2 norm over every weight and bias entry."""
    total = 0.0
    for g in grads:
        total += float(np.sum(g.weights * g.weights)) + float(np.sum(g.bias * g.bias))
    return math.sqrt(total)


def add_scaled(params: ModelParams, grads: tuple[LayerParams, ...], scale: float) -> ModelParams:
    return ModelParams(
        tuple(
            LayerParams(l.weights + scale * g.weights, l.bias + scale * g.bias)
            for l, g in zip(params.layers, grads)
        ),
        params.activations,
    )


def sam_step_from_grads(
    model: ModelParams,
    grad_fn: GradFn,
    sam: SamConfig,
    base: SgdConfig,
    state: MomentumState,
) -> tuple[ModelParams, MomentumState, float, int]:
    """Two-pass sharpness-aware update against an arbitrary objective.

    (1) g1 at w; (2) climb to w + rho*g1/||g1||; (3) g2 there; (4) descend
    from the restored w using g2 (+ 2*lam*w). The perturbation never
    persists: the returned model is an update of the original ``model``.
    Returns (model, state, loss at w, number of gradient evaluations).
    """
    loss, g1 = grad_fn(model)
    _check_shapes(model, g1)
    n_evals = 1
    g2 = g1
    if sam.rho > 0:
        norm = grad_norm(g1)
        if norm > 0:  # zero gradient: skip the perturbation, no error
            perturbed = add_scaled(model, g1, sam.rho / norm)
            _, g2 = grad_fn(perturbed)
            n_evals = 2
    if sam.lam > 0:
        g2 = tuple(
            LayerParams(g.weights + 2.0 * sam.lam * l.weights, g.bias + 2.0 * sam.lam * l.bias)
            for g, l in zip(g2, model.layers)
        )
    new_model, new_state = sgd_step(model, g2, state, base)
    return new_model, new_state, loss, n_evals


def sam_step(
    model: ModelParams,
    batch: Batch,
    sam: SamConfig,
    base: SgdConfig,
    state: MomentumState,
) -> tuple[ModelParams, MomentumState, float, int]:
    """Sharpness-aware step on the mean cross-entropy of one batch."""

    def grad_fn(m: ModelParams) -> tuple[float, tuple[LayerParams, ...]]:
        _, cache = forward(m, batch)
        gb: GradientBundle = backward(m, cache, batch.labels)
        return gb.loss, gb.param_grads

    return sam_step_from_grads(model, grad_fn, sam, base, state)


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """base_lr * decay_factor^(number of milestones <= epoch)."""
    if epoch < 0:
        raise UsageError(f"epoch must be >= 0, got {epoch}")
    k = sum(1 for m in schedule.milestones if m <= epoch)
    return schedule.base_lr * schedule.decay_factor**k
