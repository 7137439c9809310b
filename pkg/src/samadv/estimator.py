"""Scikit-learn estimator wrapping the three training styles.

``RobustMLPClassifier`` trains a small relu network by plain SGD
(``method="st"``), by the two-pass sharpness-aware update
(``method="sam"``), or by projected-gradient adversarial training
(``method="at"``), and exposes the usual fit/predict/predict_proba/score
surface so it composes with pipelines, grid search and friends.
"""
from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import adversarial, datagen, mlp, optim
from .errors import ConfigurationError

METHODS = ("st", "sam", "at")


class RobustMLPClassifier(BaseEstimator, ClassifierMixin):
    """Dense relu classifier trained by st / sam / at.

    Parameters mirror the harness configuration: ``rho``/``sam_lambda``
    apply to method="sam"; ``attack_*`` apply to method="at" (``attack_mask``
    optionally freezes input coordinates during the training attack).
    ``lr_milestones`` divide the learning rate by 1/``lr_decay`` at those
    epochs. All training is deterministic given ``random_state``.

    Fitted attributes: ``model_`` (the parameter stack), ``classes_``,
    ``n_features_in_``, ``loss_curve_`` (per-epoch mean training loss) and
    ``n_grad_evals_`` (total backward passes performed).
    """

    def __init__(
        self,
        method: str = "st",
        hidden_layer_sizes: tuple[int, ...] = (32,),
        activation: str = "relu",
        rho: float = 0.1,
        sam_lambda: float = 0.0,
        attack_norm: str = "linf",
        attack_eps: float = 8.0 / 255.0,
        attack_steps: int = 10,
        attack_alpha: float | None = None,
        attack_mask=None,
        lr: float = 0.1,
        momentum: float = 0.9,
        weight_decay: float = 5e-4,
        lr_milestones: tuple[int, ...] = (15, 18),
        lr_decay: float = 0.1,
        epochs: int = 20,
        batch_size: int = 128,
        random_state: int = 0,
    ):
        self.method = method
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.rho = rho
        self.sam_lambda = sam_lambda
        self.attack_norm = attack_norm
        self.attack_eps = attack_eps
        self.attack_steps = attack_steps
        self.attack_alpha = attack_alpha
        self.attack_mask = attack_mask
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_milestones = lr_milestones
        self.lr_decay = lr_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _training_attack(self) -> adversarial.AttackConfig:
        return adversarial.AttackConfig(
            norm=self.attack_norm,
            epsilon=self.attack_eps,
            alpha=self.attack_alpha,
            steps=self.attack_steps,
            feature_mask=None if self.attack_mask is None else np.asarray(self.attack_mask),
        )

    def fit(self, X, y):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ConfigurationError("need at least two classes to fit a classifier")
        y_idx = np.searchsorted(self.classes_, y)
        self.n_features_in_ = X.shape[1]

        root = SeedSequence(self.random_state)
        init_ss, shuffle_ss, attack_ss = root.spawn(3)
        sizes = (X.shape[1], *map(int, self.hidden_layer_sizes), len(self.classes_))
        model = mlp.init_mlp(sizes, Generator(Philox(seed=init_ss)), self.activation)
        state = optim.zero_state(model)
        schedule = optim.LrSchedule(self.lr, tuple(self.lr_milestones), self.lr_decay)
        ds = datagen.Dataset(X, y_idx)
        shuffle_seeds = [int(s.generate_state(1, np.uint64)[0]) for s in shuffle_ss.spawn(self.epochs)]
        attack_rng = Generator(Philox(seed=attack_ss))
        attack = self._training_attack() if self.method == "at" else None

        self.loss_curve_ = []
        self.n_grad_evals_ = 0
        for epoch in range(self.epochs):
            epoch_cfg = optim.SgdConfig(
                optim.lr_at(schedule, epoch), self.momentum, self.weight_decay
            )
            epoch_batches = datagen.batches(ds, self.batch_size, shuffle_seeds[epoch])
            if self.method == "at":
                model, state, stats = adversarial.adv_train_epoch(
                    model, epoch_batches, attack, epoch_cfg, state, attack_rng
                )
                self.loss_curve_.append(stats["mean_loss"])
                self.n_grad_evals_ += stats["grad_evals"]
            elif self.method == "sam":
                sam_cfg = optim.SamConfig(self.rho, self.sam_lambda)
                losses = []
                for batch in epoch_batches:
                    model, state, loss, n_evals = optim.sam_step(
                        model, batch, sam_cfg, epoch_cfg, state
                    )
                    losses.append(loss)
                    self.n_grad_evals_ += n_evals
                self.loss_curve_.append(float(np.mean(losses)))
            else:
                losses = []
                for batch in epoch_batches:
                    _, cache = mlp.forward(model, batch)
                    gb = mlp.backward(model, cache, batch.labels)
                    model, state = optim.sgd_step(model, gb.param_grads, state, epoch_cfg)
                    losses.append(gb.loss)
                    self.n_grad_evals_ += 1
                self.loss_curve_.append(float(np.mean(losses)))
        self.model_ = model
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        labels = np.zeros(X.shape[0], dtype=np.int64)
        logits, _ = mlp.forward(self.model_, mlp.Batch(X, labels))
        return logits

    def predict_proba(self, X) -> np.ndarray:
        return mlp.softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]
