"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (run pytest with -s to stream
them). The ordering/cost checks share one default-configuration sweep via
a session fixture.
"""
import time

import numpy as np
import pytest

from samadv import cli, harness, theory
from samadv.adversarial import AttackConfig, pgd_attack
from samadv.mlp import Batch, LayerParams, ModelParams, backward, forward
from samadv.optim import SamConfig, SgdConfig, sam_step, sam_step_from_grads, sgd_step, zero_state
from samadv.theory import TheoryParams

from _oracles import (
    fd_input_grads,
    fd_param_grads,
    max_rel_err,
    random_batch,
    random_model,
)


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] {name}: {status}{suffix}")
    assert ok, f"{name}{suffix}"


GRID_POINTS = [(p, eta) for p in harness.DEFAULT_P_GRID for eta in harness.DEFAULT_ETA_GRID]


def test_criterion_1_clean_optimum_matches_closed_form():
    t0 = time.perf_counter()
    rows = harness._t1_rows(GRID_POINTS)
    elapsed = time.perf_counter() - t0
    worst = max(r.rel_err for r in rows)
    ok = len(rows) == 16 and all(r.status == "pass" for r in rows) and elapsed < 5.0
    report("1 clean-optimum closed form", ok, f"16 pts, worst rel {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_adversarial_optimum_matches_closed_form():
    t0 = time.perf_counter()
    rows = harness._t2_rows(GRID_POINTS, (0.1, 0.5, 0.9))
    elapsed = time.perf_counter() - t0
    worst = max(r.rel_err for r in rows)
    ok = len(rows) == 48 and all(r.status == "pass" for r in rows) and elapsed < 15.0
    report("2 adversarial-optimum closed form", ok, f"48 pts, worst rel {worst:.2e}, {elapsed:.2f}s")


def test_criterion_3_weight_perturbation_raises_optimum_strictly():
    rows = harness._t3_rows(GRID_POINTS, (0.1, 0.5, 1.0), tol=1e-10)
    margins = [r.abs_err for r in rows if r.abs_err is not None]
    ok = len(rows) == 48 and all(r.status == "pass" for r in rows)
    report("3 strict optimum increase", ok, f"min margin {min(margins):.2e}")


def test_criterion_4_quadratic_shift_coefficient_and_identity():
    rows = harness._t4_rows(harness.SMALL_W_POINTS, (0.05, 0.1, 0.2))
    coeff_ok = all(r.status == "pass" for r in rows)
    identity_ok = all(r.rel_err <= 1e-6 for r in rows)
    worst_coeff = max(abs(r.numeric - 2.0 / 3.0) for r in rows)
    worst_gap = max(r.rel_err for r in rows)
    report(
        "4 quadratic shift 2/3 + endpoint identity",
        coeff_ok and identity_ok,
        f"max |coeff-2/3| {worst_coeff:.3f}, max identity gap {worst_gap:.1e}",
    )


def test_criterion_5_matched_budgets_agree():
    rows = harness._t5_rows(harness.SMALL_W_POINTS, (0.05, 0.1, 0.2))
    ok = all(r.status == "pass" for r in rows)
    worst = max(r.rel_err for r in rows)
    report("5 matched-budget consistency <=5%", ok, f"worst rel {worst:.3%}")


def test_criterion_6_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        d_in = int(rng.integers(2, 7))
        n_classes = int(rng.integers(2, 4))
        model = random_model(rng, n_in=d_in, n_out=n_classes)
        batch = random_batch(rng, n=3, d=d_in, n_classes=n_classes)
        _, cache = forward(model, batch)
        gb = backward(model, cache, batch.labels)
        for (fw, fb), got in zip(fd_param_grads(model, batch), gb.param_grads):
            worst = max(worst, max_rel_err(got.weights, fw), max_rel_err(got.bias, fb))
        worst = max(worst, max_rel_err(gb.input_grads, fd_input_grads(model, batch)))
    report("6 gradient exactness vs central differences", worst <= 1e-4, f"worst rel {worst:.2e}")


def test_criterion_7_pgd_matches_linear_worst_case():
    rng = np.random.default_rng(77)
    w = rng.normal(0, 1, (8, 2))
    model = ModelParams((LayerParams(w, np.zeros(2)),))
    batch = random_batch(rng, n=32, d=8, n_classes=2)
    eps = 0.2
    cfg = AttackConfig("linf", epsilon=eps, steps=10, alpha=2.5 * eps / 10)
    x_adv = pgd_attack(model, batch, cfg)

    _, cache = forward(model, batch)
    g = backward(model, cache, batch.labels).input_grads
    x_worst = batch.inputs + eps * np.sign(g)

    def mean_ce(x):
        logits, _ = forward(model, Batch(x, batch.labels))
        shift = logits - logits.max(axis=1, keepdims=True)
        logp = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
        return -logp[np.arange(len(batch.labels)), batch.labels]

    gap = float(np.max(np.abs(mean_ce(x_adv) - mean_ce(x_worst))))
    feasible = float(np.max(np.abs(x_adv - batch.inputs))) <= eps + 1e-9
    report("7 linf attack oracle on linear model", gap <= 1e-6 and feasible, f"loss gap {gap:.1e}")


def test_criterion_8_sam_reduction_and_hand_trace():
    rng = np.random.default_rng(55)
    model = random_model(rng, n_in=5, n_out=2)
    batch = random_batch(rng, n=16, d=5, n_classes=2)
    base = SgdConfig(lr=0.1, momentum=0.9, weight_decay=5e-4)
    via_sam, _, _, _ = sam_step(model, batch, SamConfig(rho=0.0), base, zero_state(model))
    _, cache = forward(model, batch)
    gb = backward(model, cache, batch.labels)
    via_sgd, _ = sgd_step(model, gb.param_grads, zero_state(model), base)
    bit_identical = all(
        a.weights.tobytes() == b.weights.tobytes() and a.bias.tobytes() == b.bias.tobytes()
        for a, b in zip(via_sam.layers, via_sgd.layers)
    )

    quad = ModelParams((LayerParams([[1.0]], [0.0]),))
    new, _, _, _ = sam_step_from_grads(
        quad,
        lambda m: (float(m.layers[0].weights[0, 0]) ** 2,
                   (LayerParams([[2.0 * m.layers[0].weights[0, 0]]], [0.0]),)),
        SamConfig(rho=0.5),
        SgdConfig(lr=0.1),
        zero_state(quad),
    )
    traced = float(new.layers[0].weights[0, 0])
    trace_ok = traced == 1.0 - 0.1 * 3.0 and abs(traced - 0.7) < 1e-12
    report("8 rho=0 reduction + quadratic hand trace", bit_identical and trace_ok,
           f"traced w'={traced!r}")


@pytest.fixture(scope="module")
def default_sweep():
    cfg = harness.parse_config([])
    t0 = time.perf_counter()
    rows = harness.sweep(cfg).rows
    elapsed = time.perf_counter() - t0
    aggregates = [r for r in rows if r.seed == cfg.seed]
    print(f"[acceptance] default sweep: {len(rows)} rows in {elapsed:.1f}s")
    return cfg, aggregates


def _per_attack(rows):
    return {(r.eval_norm, r.eval_eps): r for r in rows}


def test_criterion_9_desk_scale_ordering(default_sweep):
    cfg, aggregates = default_sweep
    st = _per_attack([r for r in aggregates if r.method == "st"])
    sam = _per_attack([r for r in aggregates if r.method == "sam" and r.rho == 0.4])
    largest_eps = max(cfg.at_eps_grid)
    at = _per_attack([r for r in aggregates if r.method == "at" and r.at_eps == largest_eps])
    keys = sorted(st)

    sam_beats_st = all(sam[k].robust_acc > st[k].robust_acc for k in keys)
    at_beats_sam = all(at[k].robust_acc > sam[k].robust_acc for k in keys)
    nat_st = st[keys[0]].natural_acc
    nat_sam = sam[keys[0]].natural_acc
    nat_at = at[keys[0]].natural_acc
    sam_keeps_natural = nat_sam >= nat_st - 0.005
    at_pays_natural = nat_at < nat_st

    margins = {
        "min sam-st": min(sam[k].robust_acc - st[k].robust_acc for k in keys),
        "min at-sam": min(at[k].robust_acc - sam[k].robust_acc for k in keys),
        "nat sam-st": nat_sam - nat_st,
        "nat st-at": nat_st - nat_at,
    }
    detail = ", ".join(f"{k} {v:+.4f}" for k, v in margins.items())
    report("9 desk-scale robustness ordering",
           sam_beats_st and at_beats_sam and sam_keeps_natural and at_pays_natural, detail)


def test_criterion_10_cost_accounting(default_sweep):
    cfg, aggregates = default_sweep
    st = next(r for r in aggregates if r.method == "st")
    sam = next(r for r in aggregates if r.method == "sam" and r.rho == 0.4)
    at = next(r for r in aggregates if r.method == "at")
    ok = sam.grad_evals == 2 * st.grad_evals and at.grad_evals == 11 * st.grad_evals
    report("10 grad-eval accounting 11:2:1", ok,
           f"st {st.grad_evals}, sam {sam.grad_evals}, at {at.grad_evals}")


def test_criterion_11_byte_identical_outputs(tmp_path):
    run_args = ["run", "--method", "sam", "--rho", "0.4", "--epochs", "2",
                "--n-train", "512", "--n-eval", "256", "--replicates", "2",
                "--seed", "42", "--eval-eps", "linf:8/255", "--eval-eps", "l2:0.5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(run_args + ["--out", str(a)]) == 0
    assert cli.main(run_args + ["--out", str(b)]) == 0
    run_ok = a.read_bytes() == b.read_bytes()

    ta, tb = tmp_path / "ta.jsonl", tmp_path / "tb.jsonl"
    assert cli.main(["theory", "--format", "json-lines", "--out", str(ta)]) == 0
    assert cli.main(["theory", "--format", "json-lines", "--out", str(tb)]) == 0
    theory_ok = ta.read_bytes() == tb.read_bytes()
    report("11 byte-identical emission", run_ok and theory_ok,
           f"run bytes {a.stat().st_size}, theory bytes {ta.stat().st_size}")
