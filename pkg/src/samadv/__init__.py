"""Sharpness-aware minimization, PGD adversarial training, and the
closed-form robust/non-robust feature model, on one small numpy stack."""

from .adversarial import AttackConfig, RobustReport, adv_train_epoch, evaluate, pgd_attack, project
from .datagen import Dataset, SyntheticSpec, batches, load_delimited, sample
from .errors import (
    ConfigurationError,
    DomainError,
    NumericError,
    SearchIntervalError,
    UsageError,
)
from .estimator import RobustMLPClassifier
from .harness import ExperimentConfig, RunReport, emit, parse_config, run, sweep, theory_verify
from .mlp import (
    Batch,
    GradientBundle,
    LayerParams,
    ModelParams,
    backward,
    cross_entropy,
    forward,
    init_mlp,
)
from .optim import LrSchedule, MomentumState, SamConfig, SgdConfig, lr_at, sam_step, sgd_step
from .theory import (
    MethodEpsilons,
    TheoryParams,
    adv_accuracy,
    argmax_scalar,
    clean_accuracy,
    epsilon_sam_from_at,
    normal_cdf,
    sam_objective,
    w1_at,
    w1_sam_approx,
    w1_sam_numeric,
    w1_star,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "Batch",
    "ConfigurationError",
    "Dataset",
    "DomainError",
    "ExperimentConfig",
    "GradientBundle",
    "LayerParams",
    "LrSchedule",
    "MethodEpsilons",
    "ModelParams",
    "MomentumState",
    "NumericError",
    "RobustMLPClassifier",
    "RobustReport",
    "RunReport",
    "SamConfig",
    "SearchIntervalError",
    "SgdConfig",
    "SyntheticSpec",
    "TheoryParams",
    "UsageError",
    "adv_accuracy",
    "adv_train_epoch",
    "argmax_scalar",
    "backward",
    "batches",
    "clean_accuracy",
    "cross_entropy",
    "emit",
    "epsilon_sam_from_at",
    "evaluate",
    "forward",
    "init_mlp",
    "load_delimited",
    "lr_at",
    "normal_cdf",
    "parse_config",
    "pgd_attack",
    "project",
    "run",
    "sam_objective",
    "sam_step",
    "sample",
    "sgd_step",
    "sweep",
    "theory_verify",
    "w1_at",
    "w1_sam_approx",
    "w1_sam_numeric",
    "w1_star",
]
