"""Seeded sampling from the synthetic robust/non-robust feature model.

Column 0 is the binary robust feature (equal to the +-1 label with
probability p); columns 1..d are i.i.d. N(eta*y, 1). Labels are stored as
{0, 1} class indices (y=-1 -> 0, y=+1 -> 1); the +-1 convention lives only
in the feature column and the theory module.

Sampling is counter-based (Philox) with Gaussians drawn by inverse CDF on
open-interval uniforms, so a seed reproduces bit-identically across
platforms and the train/eval splits use disjoint child streams.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtri

from .errors import ConfigurationError
from .mlp import Batch
from .theory import TheoryParams


@dataclass(frozen=True)
class SyntheticSpec:
    tp: TheoryParams
    n_train: int
    n_eval: int
    seed: int

    def __post_init__(self):
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigurationError("n_train and n_eval must be >= 1")
        if float(self.tp.d) != int(self.tp.d) or self.tp.d < 1:
            raise ConfigurationError(
                f"sampling needs a whole number of feature columns, got d={self.tp.d}"
            )


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d+1), {0,1} labels, and the spec that produced it
    (None for externally loaded data)."""

    inputs: np.ndarray
    labels: np.ndarray
    provenance: SyntheticSpec | None = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ConfigurationError(
                f"inputs {x.shape} and labels {y.shape} are not a consistent dataset"
            )
        if self.provenance is not None:
            if x.shape[0] != 0 and not np.all(np.abs(x[:, 0]) == 1.0):
                raise ConfigurationError("synthetic column 0 must be exactly +-1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]


def _open_uniform(rng: Generator, size) -> np.ndarray:
    # uniforms strictly inside (0, 1) so the inverse CDF stays finite
    return (rng.integers(0, 1 << 53, size=size).astype(np.float64) + 0.5) / float(1 << 53)


def _sample_block(tp: TheoryParams, n: int, ss: SeedSequence) -> tuple[np.ndarray, np.ndarray]:
    rng = Generator(Philox(seed=ss))
    d = int(tp.d)
    y = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
    agree = _open_uniform(rng, n) < tp.p
    x1 = np.where(agree, y, -y)
    gauss = ndtri(_open_uniform(rng, (n, d))) + tp.eta * y[:, None]
    inputs = np.concatenate([x1[:, None], gauss], axis=1)
    labels = ((y + 1.0) / 2.0).astype(np.int64)
    return inputs, labels


def sample(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Draw (train, eval) datasets from disjoint substreams of the seed."""
    train_ss, eval_ss = SeedSequence(spec.seed).spawn(2)
    train = Dataset(*_sample_block(spec.tp, spec.n_train, train_ss), provenance=spec)
    eval_ = Dataset(*_sample_block(spec.tp, spec.n_eval, eval_ss), provenance=spec)
    return train, eval_


def batches(ds: Dataset, batch_size: int, shuffle_seed: int) -> list[Batch]:
    """Split a seeded permutation of the dataset into batches.

    The last batch may be short; concatenating all batches is a permutation
    of the dataset.
    """
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    rng = Generator(Philox(seed=SeedSequence(shuffle_seed)))
    perm = rng.permutation(ds.n_samples)
    out = []
    for start in range(0, ds.n_samples, batch_size):
        idx = perm[start : start + batch_size]
        out.append(Batch(ds.inputs[idx], ds.labels[idx]))
    return out


def as_batch(ds: Dataset) -> Batch:
    return Batch(ds.inputs, ds.labels)


def load_delimited(path: str | Path) -> Dataset:
    """Load a comma-separated file: header row, numeric feature columns,
    final integer label column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty file, expected a header row") from None
        if len(header) < 2:
            raise ConfigurationError(f"{path}: need at least one feature column and a label")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigurationError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row[:-1]])
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: non-numeric feature: {exc}") from None
            try:
                labels.append(int(row[-1]))
            except ValueError:
                raise ConfigurationError(
                    f"{path}:{lineno}: label column must hold integers, got {row[-1]!r}"
                ) from None
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64))
