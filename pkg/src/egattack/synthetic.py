"""Seeded synthetic tabular datasets for desk-scale runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureSchema
from .errors import DataError
from .seeding import rng_for


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 2000
    n_features: int = 8
    positive_ratio: float = 0.3
    n_informative: int = 4
    noise: float = 0.1
    seed: int = 0

    def validate(self):
        if self.n_samples < 2:
            raise DataError("n_samples must be >= 2")
        if self.n_features < 1:
            raise DataError("n_features must be >= 1")
        if not 1 <= self.n_informative <= self.n_features:
            raise DataError(f"n_informative must lie in [1, {self.n_features}]")
        if not 0.0 < self.positive_ratio < 1.0:
            raise DataError("positive_ratio must lie in (0, 1)")
        if self.noise < 0:
            raise DataError("noise must be >= 0")


def generate_synthetic(spec):
    """Linear-plus-threshold labels over a random subset of informative features.

    Features get heterogeneous scales and are shifted so each column's
    minimum is 0. Exactly ``round(n * positive_ratio)`` rows are positive.
    """
    spec.validate()
    rng = rng_for(spec.seed, "synthetic")
    n, d = spec.n_samples, spec.n_features
    Z = rng.standard_normal((n, d))
    informative = np.sort(rng.permutation(d)[: spec.n_informative])
    w = rng.uniform(0.5, 1.5, size=spec.n_informative) * rng.choice([-1.0, 1.0], size=spec.n_informative)
    signal = Z[:, informative] @ w
    score = signal + spec.noise * signal.std() * rng.standard_normal(n)
    n_pos = int(np.floor(n * spec.positive_ratio + 0.5))
    n_pos = min(max(n_pos, 1), n - 1)
    order = np.argsort(score, kind="stable")
    labels = np.zeros(n, dtype=np.int64)
    labels[order[n - n_pos:]] = 1
    scales = 10.0 ** rng.uniform(0.0, 2.0, size=d)
    X = Z * scales
    X = X - X.min(axis=0)
    names = tuple(f"f{j}" for j in range(d))
    return Dataset(FeatureSchema(names, (True,) * d, "label"), X, labels)


def informative_features(spec):
    """Indices of the columns that drive the label, for a given spec."""
    rng = rng_for(spec.seed, "synthetic")
    rng.standard_normal((spec.n_samples, spec.n_features))
    return [int(i) for i in np.sort(rng.permutation(spec.n_features)[: spec.n_informative])]
