"""Experiment front door: configuration, seeded runs, theorem checks, and
deterministic CSV / JSON-lines emission.

Configuration comes from an optional line-oriented ``key=value`` file
('#' starts a comment) overlaid by command-line flags (``--key value`` or
``--key=value``; dashes map to underscores). Unknown keys are rejected by
name. Epsilon-valued entries accept fraction syntax such as ``32/255``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from . import theory
from .adversarial import AttackConfig, evaluate
from .datagen import SyntheticSpec, sample
from .errors import ConfigurationError, DomainError, SearchIntervalError
from .estimator import RobustMLPClassifier
from .theory import TheoryParams

METHODS = ("st", "sam", "at")
FORMATS = ("csv", "json-lines")
DEFAULT_EVAL_ATTACKS = (
    ("linf", 32.0 / 255.0),
    ("linf", 48.0 / 255.0),
    ("l2", 256.0 / 255.0),
    ("l2", 320.0 / 255.0),
)
DEFAULT_RHO_GRID = (0.1, 0.2, 0.4)
DEFAULT_AT_EPS_GRID = (32.0 / 255.0, 40.0 / 255.0)


def parse_fraction(text: str) -> float:
    """Float literal or 'a/b' fraction (e.g. '8/255')."""
    text = text.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            value = float(num) / float(den)
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(f"bad fraction {text!r}") from None
        return value
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"bad number {text!r}") from None


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"bad boolean {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(parse_fraction(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "st"
    rho: float | None = None
    sam_lambda: float = 0.0
    at_norm: str | None = None
    at_eps: float | None = None
    p: float = 0.75
    eta: float = 0.2
    d: int = 50
    n_train: int = 5000
    n_eval: int = 2000
    hidden: tuple[int, ...] = (32,)
    activation: str = "relu"
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_milestones: tuple[int, ...] = (15, 18)
    lr_decay: float = 0.1
    attack_steps: int = 10
    eval_steps: int = 10
    eval_attacks: tuple[tuple[str, float], ...] = DEFAULT_EVAL_ATTACKS
    protect_robust_feature: bool = True
    replicates: int = 3
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    rho_grid: tuple[float, ...] = DEFAULT_RHO_GRID
    at_eps_grid: tuple[float, ...] = DEFAULT_AT_EPS_GRID

    def theory_params(self) -> TheoryParams:
        return TheoryParams(self.p, self.eta, self.d)

    def digest(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# key -> (parser, applies-to-method or None for common)
_KEYS: dict[str, Callable[[str], object]] = {
    "method": str,
    "rho": parse_fraction,
    "sam_lambda": parse_fraction,
    "at_norm": str,
    "at_eps": parse_fraction,
    "p": float,
    "eta": float,
    "d": int,
    "n_train": int,
    "n_eval": int,
    "hidden": _parse_int_list,
    "activation": str,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "momentum": float,
    "weight_decay": float,
    "lr_milestones": _parse_int_list,
    "lr_decay": float,
    "attack_steps": int,
    "eval_steps": int,
    "eval_norm": str,
    "eval_eps": None,  # repeatable, handled specially
    "protect_robust_feature": _parse_bool,
    "replicates": int,
    "seed": int,
    "out": str,
    "format": str,
    "config": str,
    "rho_grid": _parse_float_list,
    "at_eps_grid": _parse_float_list,
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Line-oriented key=value file; '#' comments; later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        if key == "eval_eps":
            out[key] = (out[key] + "," + value.strip()) if key in out else value.strip()
        else:
            out[key] = value.strip()
    return out


def _tokenize_flags(args: Sequence[str]) -> dict[str, str]:
    """--key value / --key=value flag tokens into a raw key->value map."""
    out: dict[str, str] = {}
    i = 0
    while i < len(args):
        token = args[i]
        if not token.startswith("--"):
            raise ConfigurationError(f"unexpected argument {token!r} (expected --key value)")
        body = token[2:]
        if "=" in body:
            key, _, value = body.partition("=")
            i += 1
        else:
            key = body
            if i + 1 >= len(args):
                raise ConfigurationError(f"flag --{key} needs a value")
            value = args[i + 1]
            i += 2
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigurationError(f"unknown key {key!r}")
        if key == "eval_eps" and key in out:
            out[key] = out[key] + "," + value
        else:
            out[key] = value
    return out


def _parse_eval_attacks(raw: str, default_norm: str) -> tuple[tuple[str, float], ...]:
    attacks = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            norm, _, eps_text = item.partition(":")
        else:
            norm, eps_text = default_norm, item
        if norm not in ("linf", "l2"):
            raise ConfigurationError(f"eval norm must be linf or l2, got {norm!r}")
        eps = parse_fraction(eps_text)
        if eps < 0:
            raise ConfigurationError(f"eval_eps must be >= 0, got {eps}")
        attacks.append((norm, eps))
    if not attacks:
        raise ConfigurationError("eval_eps given but no attack could be parsed")
    return tuple(attacks)


def parse_config(args: Sequence[str], file: str | Path | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from flag tokens over an optional file.

    File values load first, flags override. Unknown keys, missing
    method-required keys, and keys foreign to the selected method are all
    rejected by name.
    """
    flags = _tokenize_flags(args)
    file = flags.pop("config", None) or file
    raw: dict[str, str] = {}
    if file is not None:
        raw.update(read_config_file(file))
    # a file-level eval_eps is replaced (not extended) by flag-level entries
    raw.update(flags)

    values: dict[str, object] = {}
    for key, text in raw.items():
        if key == "eval_eps":
            continue
        parser = _KEYS[key]
        try:
            values[key] = parser(text)
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad value for {key!r}: {exc}") from None
    default_norm = str(values.pop("eval_norm", "linf"))
    if "eval_eps" in raw:
        values["eval_attacks"] = _parse_eval_attacks(raw["eval_eps"], default_norm)

    method = str(values.get("method", "st"))
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}, got {method!r}")
    if method == "sam":
        if "rho" not in values:
            raise ConfigurationError("method=sam requires rho")
        for foreign in ("at_norm", "at_eps"):
            if foreign in values:
                raise ConfigurationError(f"{foreign!r} does not apply to method=sam")
    elif method == "at":
        for required in ("at_norm", "at_eps"):
            if required not in values:
                raise ConfigurationError(f"method=at requires {required}")
        if values["at_norm"] not in ("linf", "l2"):
            raise ConfigurationError(f"at_norm must be linf or l2, got {values['at_norm']!r}")
        if "rho" in values:
            raise ConfigurationError("'rho' does not apply to method=at")
    else:
        for foreign in ("rho", "at_norm", "at_eps"):
            if foreign in values:
                raise ConfigurationError(f"{foreign!r} does not apply to method=st")

    if values.get("format", "csv") not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}")
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    cfg.theory_params()  # validates (p, eta, d)
    if cfg.epochs < 1 or cfg.batch_size < 1 or cfg.replicates < 1:
        raise ConfigurationError("epochs, batch_size and replicates must be >= 1")
    return cfg


@dataclass
class RunRow:
    method: str
    rho: float | None
    at_norm: str | None
    at_eps: float | None
    eval_norm: str | None
    eval_eps: float | None
    natural_acc: float
    robust_acc: float | None
    seed: int
    wall_time_s: float
    grad_evals: int


RUN_FIELDS = [f.name for f in dataclasses.fields(RunRow)]


@dataclass
class RunReport:
    rows: list[RunRow]
    config_digest: str = ""

    field_names = staticmethod(lambda: RUN_FIELDS)


@dataclass
class TheoremRow:
    theorem: str
    p: float
    eta: float
    d: float
    eps: float | None
    reference: float | None
    numeric: float | None
    abs_err: float | None
    rel_err: float | None
    status: str


THEOREM_FIELDS = [f.name for f in dataclasses.fields(TheoremRow)]


@dataclass
class VerificationTable:
    rows: list[TheoremRow]

    field_names = staticmethod(lambda: THEOREM_FIELDS)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r.status == "fail")


class PhaseError(RuntimeError):
    """Wraps a failure with the run phase (data / train / eval) it came from."""

    def __init__(self, phase: str, original: BaseException):
        super().__init__(f"{phase} phase failed: {original}")
        self.phase = phase
        self.original = original


def _feature_mask(n_features: int, protect_first: bool) -> np.ndarray | None:
    if not protect_first:
        return None
    mask = np.ones(n_features)
    mask[0] = 0.0
    return mask


def eval_attack_configs(cfg: ExperimentConfig) -> list[AttackConfig]:
    mask = _feature_mask(cfg.d + 1, cfg.protect_robust_feature)
    return [
        AttackConfig(norm=norm, epsilon=eps, steps=cfg.eval_steps, feature_mask=mask)
        for norm, eps in cfg.eval_attacks
    ]


def _estimator_for(cfg: ExperimentConfig, random_state: int) -> RobustMLPClassifier:
    mask = _feature_mask(cfg.d + 1, cfg.protect_robust_feature)
    return RobustMLPClassifier(
        method=cfg.method,
        hidden_layer_sizes=cfg.hidden,
        activation=cfg.activation,
        rho=cfg.rho if cfg.rho is not None else 0.0,
        sam_lambda=cfg.sam_lambda,
        attack_norm=cfg.at_norm or "linf",
        attack_eps=cfg.at_eps if cfg.at_eps is not None else 0.0,
        attack_steps=cfg.attack_steps,
        attack_mask=mask,
        lr=cfg.lr,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        lr_milestones=cfg.lr_milestones,
        lr_decay=cfg.lr_decay,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        random_state=random_state,
    )


def run(cfg: ExperimentConfig) -> RunReport:
    """Train and evaluate one configuration over its replicates.

    Emits one row per (replicate, eval attack) — plus a natural-only row
    when no attacks are configured — followed by replicate-averaged rows
    carrying the root seed. Deterministic given the config.
    """
    attacks = eval_attack_configs(cfg)
    rows: list[RunRow] = []
    sums: dict[tuple[str | None, float | None], list[float]] = {}
    nat_sum, wall_sum = 0.0, 0.0
    grad_evals = 0
    for rep_ss in SeedSequence(cfg.seed).spawn(cfg.replicates):
        data_seed, est_seed = (int(v) for v in rep_ss.generate_state(2, np.uint64))
        t0 = time.perf_counter()
        try:
            spec = SyntheticSpec(cfg.theory_params(), cfg.n_train, cfg.n_eval, data_seed)
            train, eval_ = sample(spec)
        except Exception as exc:  # noqa: BLE001 - annotate and rethrow
            raise PhaseError("data", exc) from exc
        try:
            clf = _estimator_for(cfg, est_seed).fit(train.inputs, train.labels)
        except Exception as exc:  # noqa: BLE001
            raise PhaseError("train", exc) from exc
        try:
            eval_rng = Generator(Philox(seed=rep_ss.spawn(1)[0]))
            report = evaluate(clf.model_, eval_, attacks, eval_rng)
        except Exception as exc:  # noqa: BLE001
            raise PhaseError("eval", exc) from exc
        wall = time.perf_counter() - t0
        nat_sum += report.natural_accuracy
        wall_sum += wall
        grad_evals = clf.n_grad_evals_
        keys = [(a.norm, a.epsilon) for a in attacks] or [(None, None)]
        for key in keys:
            robust = report.robust_accuracy.get(key) if key[0] is not None else None
            sums.setdefault(key, []).append(robust if robust is not None else np.nan)
            rows.append(
                RunRow(
                    method=cfg.method,
                    rho=cfg.rho,
                    at_norm=cfg.at_norm,
                    at_eps=cfg.at_eps,
                    eval_norm=key[0],
                    eval_eps=key[1],
                    natural_acc=report.natural_accuracy,
                    robust_acc=robust,
                    seed=data_seed,
                    wall_time_s=wall,
                    grad_evals=clf.n_grad_evals_,
                )
            )
    n = cfg.replicates
    for key, robusts in sums.items():
        mean_robust = None if key[0] is None else float(np.mean(robusts))
        rows.append(
            RunRow(
                method=cfg.method,
                rho=cfg.rho,
                at_norm=cfg.at_norm,
                at_eps=cfg.at_eps,
                eval_norm=key[0],
                eval_eps=key[1],
                natural_acc=nat_sum / n,
                robust_acc=mean_robust,
                seed=cfg.seed,
                wall_time_s=wall_sum / n,
                grad_evals=grad_evals,
            )
        )
    return RunReport(rows, cfg.digest())


def sweep(cfg: ExperimentConfig) -> RunReport:
    """Cartesian sweep: st, then sam over rho_grid, then at over at_eps_grid."""
    configs = [dataclasses.replace(cfg, method="st", rho=None, at_norm=None, at_eps=None)]
    for rho in cfg.rho_grid:
        configs.append(
            dataclasses.replace(cfg, method="sam", rho=rho, at_norm=None, at_eps=None)
        )
    at_norm = cfg.at_norm or "linf"
    for eps in cfg.at_eps_grid:
        configs.append(
            dataclasses.replace(cfg, method="at", rho=None, at_norm=at_norm, at_eps=eps)
        )
    rows: list[RunRow] = []
    for sub in configs:
        rows.extend(run(sub).rows)
    return RunReport(rows, cfg.digest())


DEFAULT_P_GRID = (0.6, 0.75, 0.9, 0.99)
DEFAULT_ETA_GRID = (0.05, 0.1, 0.5, 1.0)
# points with order-one optimal weight: the quadratic-shift law is checked
# on the variance-normalized aggregate (d = 1/2), where exp(-w^2) stays
# resolvable only for small w
SMALL_W_POINTS = ((0.6, 0.5), (0.75, 0.5), (0.75, 1.0), (0.9, 1.0))
QUADRATIC_SHIFT_D = 0.5
SHIFT_COEFF = 2.0 / 3.0
SHIFT_COEFF_TOL = 0.07
SMALL_EPS_REGIME = 0.2
ENDPOINT_IDENTITY_TOL = 1e-6
MATCHED_BUDGET_REL_TOL = 0.05


def _t1_rows(points) -> list[TheoremRow]:
    rows = []
    for p, eta in points:
        ref = theory.w1_star(p, eta)
        d = theory.well_conditioned_d(p, eta)
        tp = TheoryParams(p, eta, d)
        hi = max(10.0 * ref, 1.0)
        numeric = theory.argmax_scalar(lambda w: theory.clean_accuracy(w, tp), 0.0, hi)
        abs_err = abs(numeric - ref)
        rel_err = abs_err / (1.0 + ref)
        status = "pass" if rel_err <= 1e-4 else "fail"
        rows.append(TheoremRow("T1-clean-optimum", p, eta, d, None, ref, numeric, abs_err, rel_err, status))
    return rows


def _t2_rows(points, fracs) -> list[TheoremRow]:
    rows = []
    for p, eta in points:
        for frac in fracs:
            eps = frac * eta
            try:
                ref = theory.w1_at(p, eta, eps)
            except DomainError:
                rows.append(
                    TheoremRow("T2-adv-optimum", p, eta, 0.0, eps, None, None, None, None, "domain-error")
                )
                continue
            d = theory.well_conditioned_d(p, eta - eps)
            tp = TheoryParams(p, eta, d)
            hi = max(10.0 * ref, 1.0)
            numeric = theory.argmax_scalar(
                lambda w: theory.adv_accuracy(w, tp, eps), 0.0, hi
            )
            abs_err = abs(numeric - ref)
            rel_err = abs_err / (1.0 + ref)
            status = "pass" if rel_err <= 1e-4 else "fail"
            rows.append(TheoremRow("T2-adv-optimum", p, eta, d, eps, ref, numeric, abs_err, rel_err, status))
    return rows


def _t3_rows(points, eps_values, tol=1e-10) -> list[TheoremRow]:
    rows = []
    for p, eta in points:
        ref = theory.w1_star(p, eta)
        d = theory.well_conditioned_d(p, eta)
        tp = TheoryParams(p, eta, d)
        for eps in eps_values:
            try:
                numeric = theory.w1_sam_numeric(tp, eps, tol=tol)
            except SearchIntervalError as exc:
                rows.append(
                    TheoremRow("T3-sam-exceeds", p, eta, d, eps, ref, None, None, None, f"search-error:{exc}")
                )
                continue
            margin = numeric - ref
            status = "pass" if margin > tol else "fail"
            rows.append(TheoremRow("T3-sam-exceeds", p, eta, d, eps, ref, numeric, margin, margin / ref, status))
    return rows


def _t4_rows(points, eps_values) -> list[TheoremRow]:
    rows = []
    d = QUADRATIC_SHIFT_D
    for p, eta in points:
        ws = theory.w1_star(p, eta)
        tp = TheoryParams(p, eta, d)
        for eps in eps_values:
            numeric_w = theory.w1_sam_numeric(tp, eps)
            coeff = (numeric_w - ws) / (ws * eps * eps)
            identity_gap = abs(
                theory.clean_accuracy(numeric_w - eps, tp)
                - theory.clean_accuracy(numeric_w + eps, tp)
            )
            if identity_gap > ENDPOINT_IDENTITY_TOL:
                status = "fail"
            elif eps > SMALL_EPS_REGIME:
                status = "outside-regime"
            elif abs(coeff - SHIFT_COEFF) <= SHIFT_COEFF_TOL:
                status = "pass"
            else:
                status = "fail"
            rows.append(
                TheoremRow(
                    "T4-quadratic-shift", p, eta, d, eps, SHIFT_COEFF, coeff,
                    abs(coeff - SHIFT_COEFF), identity_gap, status,
                )
            )
    return rows


def _t5_rows(points, fracs) -> list[TheoremRow]:
    rows = []
    d = QUADRATIC_SHIFT_D
    for p, eta in points:
        tp = TheoryParams(p, eta, d)
        for frac in fracs:
            eps_at = frac * eta
            try:
                eps_sam = theory.epsilon_sam_from_at(eta, eps_at)
                ref = theory.w1_at(p, eta, eps_at)
            except DomainError:
                rows.append(
                    TheoremRow("T5-matched-budgets", p, eta, d, eps_at, None, None, None, None, "domain-error")
                )
                continue
            numeric = theory.w1_sam_numeric(tp, eps_sam)
            rel = abs(numeric - ref) / ref
            ok = rel <= MATCHED_BUDGET_REL_TOL and eps_sam > eps_at
            rows.append(
                TheoremRow("T5-matched-budgets", p, eta, d, eps_at, ref, numeric, abs(numeric - ref), rel,
                           "pass" if ok else "fail")
            )
    return rows


def theory_verify(
    points: Sequence[tuple[float, float]] | None = None,
    eps_at_fracs: Sequence[float] = (0.1, 0.5, 0.9),
    eps_sam_values: Sequence[float] = (0.1, 0.5, 1.0),
    shift_eps_values: Sequence[float] = (0.05, 0.1, 0.2, 0.5),
    matched_fracs: Sequence[float] = (0.05, 0.1, 0.2),
) -> VerificationTable:
    """Check every closed form against an independent numerical optimum.

    One row per (check, parameter point): reference value, numerical value,
    errors, and a pass / fail / domain-error / outside-regime status.
    Clean/adversarial optimum grids evaluate at a numerically
    well-conditioned feature count (the optima are d-independent); the
    quadratic-shift and matched-budget checks evaluate the
    variance-normalized aggregate (d = 1/2) at order-one optimal weights.
    """
    if points is None:
        points = [(p, eta) for p in DEFAULT_P_GRID for eta in DEFAULT_ETA_GRID]
    if not points:
        raise ConfigurationError("theory_verify needs a nonempty grid")
    rows = []
    rows += _t1_rows(points)
    rows += _t2_rows(points, eps_at_fracs)
    rows += _t3_rows(points, eps_sam_values)
    rows += _t4_rows(SMALL_W_POINTS, shift_eps_values)
    rows += _t5_rows(SMALL_W_POINTS, matched_fracs)
    return VerificationTable(rows)


def _format_value(value, float_digits=6) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{float_digits}f}"
    return str(value)


def _json_value(value):
    if value is None or isinstance(value, (str, bool)):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    return round(float(value), 6)


def emit(
    report: RunReport | VerificationTable,
    fmt: str,
    path: str | Path,
    include_timing: bool = False,
) -> None:
    """Write a report deterministically: CSV (header + 6-digit floats) or
    JSON lines mirroring the same columns.

    Wall-clock values are machine noise, so the ``wall_time_s`` column is
    left empty unless ``include_timing`` is set; identical configs then
    produce byte-identical files.
    """
    if fmt not in FORMATS:
        raise ConfigurationError(f"format must be one of {FORMATS}, got {fmt!r}")
    fields = report.field_names()
    lines = []
    if fmt == "csv":
        lines.append(",".join(fields))
    for row in report.rows:
        record = dataclasses.asdict(row)
        if "wall_time_s" in record and not include_timing:
            record["wall_time_s"] = None
        if fmt == "csv":
            lines.append(",".join(_format_value(record[k]) for k in fields))
        else:
            lines.append(json.dumps({k: _json_value(record[k]) for k in fields}))
    text = "\n".join(lines) + "\n"
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
