"""Input-space attacks and adversarial training.

Projected gradient ascent on the per-sample cross-entropy: signed steps for
the linf ball, per-sample normalized-gradient steps for the l2 ball, each
followed by projection back onto the ball (and an optional value clamp).
An optional feature mask freezes chosen coordinates so attacks can be
restricted to a subset of features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, UsageError
from .mlp import Batch, ModelParams, backward, forward
from .optim import MomentumState, SgdConfig, sgd_step

NORMS = ("linf", "l2")


@dataclass(frozen=True, eq=False)
class AttackConfig:
    """Knobs of the projected-gradient attack.

    ``alpha=None`` selects the 2.5*epsilon/steps heuristic. ``feature_mask``
    is a per-coordinate 0/1 vector; frozen (0) coordinates are never
    perturbed. ``clip_domain`` clamps outputs into [lo, hi] after projection.
    """

    norm: str
    epsilon: float
    alpha: float | None = None
    steps: int = 10
    random_start: bool = False
    clip_domain: tuple[float, float] | None = None
    feature_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigurationError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 0:
            raise ConfigurationError(f"steps must be >= 0, got {self.steps}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if self.clip_domain is not None:
            lo, hi = self.clip_domain
            if not lo < hi:
                raise ConfigurationError(f"clip_domain must satisfy lo < hi, got {self.clip_domain}")
        if self.feature_mask is not None:
            m = np.asarray(self.feature_mask, dtype=np.float64)
            if m.ndim != 1 or not np.all((m == 0.0) | (m == 1.0)):
                raise ConfigurationError("feature_mask must be a 1-d vector of 0/1 entries")
            m.setflags(write=False)
            object.__setattr__(self, "feature_mask", m)

    def step_size(self) -> float:
        if self.alpha is not None:
            return self.alpha
        if self.steps == 0:
            return 0.0
        return 2.5 * self.epsilon / self.steps


@dataclass
class RobustReport:
    """Clean accuracy plus robust accuracy per (norm, epsilon) attack."""

    natural_accuracy: float
    robust_accuracy: dict[tuple[str, float], float] = field(default_factory=dict)
    n_samples: int = 0


def project(
    x_adv: np.ndarray,
    x: np.ndarray,
    norm: str,
    epsilon: float,
    clip_domain: tuple[float, float] | None = None,
    feature_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Closest point of the epsilon-ball around ``x`` to ``x_adv``.

    linf clamps each coordinate of the offset; l2 rescales offsets whose
    row norm exceeds epsilon. Points already inside come back bit-identical
    (frozen coordinates are snapped back to ``x`` first).
    """
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_adv.shape != x.shape:
        raise UsageError(f"shape mismatch: {x_adv.shape} vs {x.shape}")
    single = x.ndim == 1
    xa = np.atleast_2d(x_adv)
    xc = np.atleast_2d(x)
    delta = xa - xc
    if feature_mask is not None:
        delta = delta * feature_mask
    # inside the ball (and unmasked) the point passes through bit-identical
    inside_value = xa if feature_mask is None else xc + delta
    if norm == "linf":
        clipped = xc + np.clip(delta, -epsilon, epsilon)
        out = np.where(np.abs(delta) <= epsilon, inside_value, clipped)
    elif norm == "l2":
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        factor = np.divide(epsilon, norms, out=np.ones_like(norms), where=norms > epsilon)
        out = np.where(norms <= epsilon, inside_value, xc + delta * factor)
    else:
        raise ConfigurationError(f"norm must be one of {NORMS}, got {norm!r}")
    if feature_mask is not None:
        out = np.where(feature_mask == 0.0, xc, out)
    if clip_domain is not None:
        lo, hi = clip_domain
        out = np.where((out >= lo) & (out <= hi), out, np.clip(out, lo, hi))
    return out[0] if single else out


def _input_gradients(model: ModelParams, inputs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    batch = Batch(inputs, labels)
    _, cache = forward(model, batch)
    return backward(model, cache, labels).input_grads


def _random_within_ball(
    x: np.ndarray, cfg: AttackConfig, rng: np.random.Generator
) -> np.ndarray:
    mask = cfg.feature_mask
    if cfg.norm == "linf":
        offset = rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape)
    else:
        direction = rng.standard_normal(x.shape)
        if mask is not None:
            direction = direction * mask
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        k = x.shape[1] if mask is None else max(int(mask.sum()), 1)
        radius = cfg.epsilon * rng.uniform(0.0, 1.0, size=(x.shape[0], 1)) ** (1.0 / k)
        offset = direction / norms * radius
    if mask is not None:
        offset = offset * mask
    return project(x + offset, x, cfg.norm, cfg.epsilon, cfg.clip_domain, mask)


def pgd_attack(
    model: ModelParams,
    batch: Batch,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Iterative projected gradient ascent on the per-sample loss.

    Returns adversarial inputs, each inside the epsilon-ball (and clip
    domain) around the corresponding clean input. steps=0 or epsilon=0
    returns the clean inputs exactly. Zero-gradient samples simply stay
    where they are for that iteration.
    """
    x0 = batch.inputs
    if cfg.steps == 0 or cfg.epsilon == 0.0:
        return x0.copy()
    if cfg.random_start:
        if rng is None:
            raise UsageError("random_start requires a seeded rng")
        x_adv = _random_within_ball(x0, cfg, rng)
    else:
        x_adv = x0.copy()
    alpha = cfg.step_size()
    mask = cfg.feature_mask
    for _ in range(cfg.steps):
        g = _input_gradients(model, x_adv, batch.labels)
        if mask is not None:
            g = g * mask
        if cfg.norm == "linf":
            step = alpha * np.sign(g)
        else:
            norms = np.linalg.norm(g, axis=1, keepdims=True)
            direction = np.divide(g, norms, out=np.zeros_like(g), where=norms > 0)
            step = alpha * direction
        x_adv = project(x_adv + step, x0, cfg.norm, cfg.epsilon, cfg.clip_domain, mask)
    return x_adv


def attack_grad_evals(cfg: AttackConfig) -> int:
    """Backward passes one attack call performs (mirrors pgd_attack)."""
    if cfg.steps == 0 or cfg.epsilon == 0.0:
        return 0
    return cfg.steps


def adv_train_epoch(
    model: ModelParams,
    batches: Iterable[Batch],
    attack: AttackConfig,
    opt: SgdConfig,
    state: MomentumState,
    rng: np.random.Generator | None = None,
) -> tuple[ModelParams, MomentumState, dict]:
    """One adversarial-training epoch: attack each batch against the current
    model, then take one SGD step on the adversarial batch.

    steps=0 (or epsilon=0) degenerates to a standard-training epoch.
    Returns the updated model/state and ``{"mean_loss", "grad_evals",
    "n_batches"}`` where grad_evals counts actual backward passes.
    """
    losses = []
    grad_evals = 0
    n_batches = 0
    for batch in batches:
        x_adv = pgd_attack(model, batch, attack, rng)
        adv_batch = Batch(x_adv, batch.labels)
        _, cache = forward(model, adv_batch)
        gb = backward(model, cache, adv_batch.labels)
        model, state = sgd_step(model, gb.param_grads, state, opt)
        losses.append(gb.loss)
        grad_evals += attack_grad_evals(attack) + 1
        n_batches += 1
    if n_batches == 0:
        raise UsageError("adv_train_epoch needs at least one batch")
    stats = {"mean_loss": float(np.mean(losses)), "grad_evals": grad_evals, "n_batches": n_batches}
    return model, state, stats


def evaluate(
    model: ModelParams,
    dataset,
    attacks: Sequence[AttackConfig] = (),
    rng: np.random.Generator | None = None,
) -> RobustReport:
    """Natural accuracy plus robust accuracy under each attack config.

    ``dataset`` is anything with ``inputs`` and ``labels`` (a Dataset or a
    Batch). Attacks are generated fresh against the given model.
    """
    inputs = np.asarray(dataset.inputs, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise UsageError("evaluate needs a non-empty dataset")
    batch = Batch(inputs, labels)
    logits, _ = forward(model, batch)
    natural = float((logits.argmax(axis=1) == labels).mean())
    report = RobustReport(natural_accuracy=natural, n_samples=len(labels))
    for cfg in attacks:
        x_adv = pgd_attack(model, batch, cfg, rng)
        adv_logits, _ = forward(model, Batch(x_adv, labels))
        report.robust_accuracy[(cfg.norm, cfg.epsilon)] = float(
            (adv_logits.argmax(axis=1) == labels).mean()
        )
    return report
