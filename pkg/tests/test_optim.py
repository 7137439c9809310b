import numpy as np
import pytest

from samadv.errors import ConfigurationError, UsageError
from samadv.mlp import Batch, LayerParams, ModelParams, backward, forward
from samadv.optim import (
    LrSchedule,
    SamConfig,
    SgdConfig,
    grad_norm,
    lr_at,
    sam_step,
    sam_step_from_grads,
    sgd_step,
    zero_state,
)

from _oracles import random_batch, random_model


def scalar_model(w: float) -> ModelParams:
    return ModelParams((LayerParams([[w]], [0.0]),))


def scalar_grads(g: float) -> tuple[LayerParams, ...]:
    return (LayerParams([[g]], [0.0]),)


def weight(model: ModelParams) -> float:
    return float(model.layers[0].weights[0, 0])


def test_plain_gradient_step():
    model = scalar_model(1.0)
    new, _ = sgd_step(model, scalar_grads(2.0), zero_state(model), SgdConfig(lr=0.1))
    assert weight(new) == pytest.approx(0.8, rel=1e-12)


def test_momentum_accumulates_over_two_steps():
    model = scalar_model(0.0)
    cfg = SgdConfig(lr=0.1, momentum=0.9)
    state = zero_state(model)
    first, state = sgd_step(model, scalar_grads(1.0), state, cfg)
    assert weight(first) == pytest.approx(-0.1, rel=1e-12)
    second, state = sgd_step(first, scalar_grads(1.0), state, cfg)
    # v = 0.9*1 + 1 = 1.9 so the second decrement is 0.19
    assert weight(second) - weight(first) == pytest.approx(-0.19, rel=1e-12)


def test_weight_decay_only_step():
    model = scalar_model(2.0)
    new, _ = sgd_step(model, scalar_grads(0.0), zero_state(model), SgdConfig(lr=0.1, weight_decay=0.5))
    assert weight(new) == pytest.approx(1.9, rel=1e-12)


def test_shape_mismatch_is_usage_error():
    model = scalar_model(1.0)
    bad = (LayerParams([[1.0, 2.0]], [0.0, 0.0]),)
    with pytest.raises(UsageError):
        sgd_step(model, bad, zero_state(model), SgdConfig(lr=0.1))


def _params_bytes(model: ModelParams) -> bytes:
    return b"".join(l.weights.tobytes() + l.bias.tobytes() for l in model.layers)


def test_sam_rho_zero_bit_identical_to_sgd():
    rng = np.random.default_rng(42)
    model = random_model(rng, n_in=4, n_out=3)
    batch = random_batch(rng, n=8, d=4, n_classes=3)
    base = SgdConfig(lr=0.05, momentum=0.9, weight_decay=5e-4)

    via_sam, _, _, n_evals = sam_step(model, batch, SamConfig(rho=0.0), base, zero_state(model))
    _, cache = forward(model, batch)
    gb = backward(model, cache, batch.labels)
    via_sgd, _ = sgd_step(model, gb.param_grads, zero_state(model), base)
    assert _params_bytes(via_sam) == _params_bytes(via_sgd)
    assert n_evals == 1


def test_sam_two_pass_hand_trace_on_quadratic():
    # L(w) = w^2 at w=1: g1=2, eps=rho*g1/|g1|=0.5, g2=2*1.5=3, w'=1-0.1*3
    def grad_fn(m):
        w = weight(m)
        return w * w, scalar_grads(2.0 * w)

    model = scalar_model(1.0)
    new, _, loss, n_evals = sam_step_from_grads(
        model, grad_fn, SamConfig(rho=0.5), SgdConfig(lr=0.1), zero_state(model)
    )
    assert loss == 1.0
    assert n_evals == 2
    assert weight(new) == 1.0 - 0.1 * 3.0
    assert weight(new) == pytest.approx(0.7, rel=1e-12)


def test_sam_lr_zero_restores_parameters_exactly():
    rng = np.random.default_rng(9)
    model = random_model(rng, n_in=3, n_out=2)
    batch = random_batch(rng, n=5, d=3, n_classes=2)
    new, _, _, _ = sam_step(model, batch, SamConfig(rho=0.3), SgdConfig(lr=0.0), zero_state(model))
    for before, after in zip(model.layers, new.layers):
        assert np.array_equal(before.weights, after.weights)
        assert np.array_equal(before.bias, after.bias)


def test_sam_perturbation_is_first_order_ascent():
    # identity activations keep the landscape smooth; small rho keeps the
    # linearization honest
    rng = np.random.default_rng(17)
    for _ in range(10):
        n_hidden = int(rng.integers(0, 3))
        sizes = [4] + [int(rng.integers(2, 8)) for _ in range(n_hidden)] + [3]
        layers = tuple(
            LayerParams(rng.normal(0, 0.5, (a, b)), rng.normal(0, 0.1, b))
            for a, b in zip(sizes[:-1], sizes[1:])
        )
        model = ModelParams(layers, ("identity",) * n_hidden)
        batch = random_batch(rng, n=6, d=4, n_classes=3)
        _, cache = forward(model, batch)
        gb = backward(model, cache, batch.labels)
        norm = grad_norm(gb.param_grads)
        rho = 0.05
        perturbed = ModelParams(
            tuple(
                LayerParams(l.weights + rho / norm * g.weights, l.bias + rho / norm * g.bias)
                for l, g in zip(model.layers, gb.param_grads)
            ),
            model.activations,
        )
        _, cache_p = forward(perturbed, batch)
        up = backward(perturbed, cache_p, batch.labels).loss
        assert up >= gb.loss - 1e-9


def test_sam_zero_gradient_skips_perturbation():
    def grad_fn(m):
        return 0.0, scalar_grads(0.0)

    model = scalar_model(1.5)
    new, _, _, n_evals = sam_step_from_grads(
        model, grad_fn, SamConfig(rho=0.5), SgdConfig(lr=0.1), zero_state(model)
    )
    assert n_evals == 1
    assert weight(new) == 1.5


def test_sam_lambda_adds_explicit_regularizer():
    def grad_fn(m):
        return 0.0, scalar_grads(0.0)

    model = scalar_model(2.0)
    new, _, _, _ = sam_step_from_grads(
        model, grad_fn, SamConfig(rho=0.0, lam=0.25), SgdConfig(lr=0.1), zero_state(model)
    )
    # gradient becomes 2*lam*w = 1.0
    assert weight(new) == pytest.approx(2.0 - 0.1, rel=1e-12)


def test_lr_schedule_paper_values():
    schedule = LrSchedule(0.1, (75, 90), 0.1)
    assert lr_at(schedule, 10) == pytest.approx(0.1)
    assert lr_at(schedule, 75) == pytest.approx(0.01)
    assert lr_at(schedule, 90) == pytest.approx(0.001)


def test_lr_schedule_degenerate_and_monotone():
    flat = LrSchedule(0.3, (), 0.1)
    assert all(lr_at(flat, e) == 0.3 for e in range(50))
    schedule = LrSchedule(1.0, (3, 7, 9), 0.5)
    values = [lr_at(schedule, e) for e in range(15)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    with pytest.raises(UsageError):
        lr_at(schedule, -1)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SgdConfig(lr=-0.1)
    with pytest.raises(ConfigurationError):
        SgdConfig(lr=0.1, momentum=1.0)
    with pytest.raises(ConfigurationError):
        SgdConfig(lr=0.1, weight_decay=-1e-4)
    with pytest.raises(ConfigurationError):
        SamConfig(rho=-0.1)
    with pytest.raises(ConfigurationError):
        LrSchedule(0.1, (5, 5), 0.1)
    with pytest.raises(ConfigurationError):
        LrSchedule(0.1, (), 0.0)
