"""Model zoo: training, probability prediction, cross-validation, grid search."""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import ModelError
from ..evaluation import classification_metrics, reliability_gate  # noqa: F401  (re-exported)
from ..jsonio import dumps
from ..seeding import derive_seed, rng_for
from .classifiers import MODEL_KINDS, Classifier, from_dict, model_class

__all__ = [
    "MODEL_KINDS", "Classifier", "CVResult", "train", "predict_proba", "cross_validate",
    "fold_indices", "grid_search", "grid_points", "reliability_gate", "default_grids",
    "save_model", "load_model",
]


def train(kind, hyperparams, train, seed=0):
    """Fit a classifier of ``kind`` on a :class:`~egattack.data.Dataset`."""
    clf = model_class(kind)(seed=seed, **(hyperparams or {}))
    return clf.fit(train.rows, train.labels)


def predict_proba(clf, x):
    """(p0, p1) for a single row; p1 is the risk score."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ModelError("predict_proba expects a single feature row")
    p = clf.predict_proba(x)
    return float(p[0]), float(p[1])


def fold_indices(labels, folds, seed):
    """Stratified fold assignment: each class is shuffled then dealt round-robin."""
    labels = np.asarray(labels)
    n = len(labels)
    if folds < 2:
        raise ModelError("cross-validation needs at least 2 folds")
    if folds > n:
        raise ModelError(f"{folds} folds requested for {n} rows")
    rng = rng_for(seed, "cv-folds")
    order = np.concatenate([
        np.flatnonzero(labels == c)[rng.permutation(int(np.sum(labels == c)))] for c in (0, 1)
    ])
    assign = np.empty(n, dtype=np.int64)
    assign[order] = np.arange(n) % folds
    return [np.flatnonzero(assign == f) for f in range(folds)]


@dataclass
class CVResult:
    auc: list
    accuracy: list
    f1: list

    @property
    def mean_auc(self):
        vals = [v for v in self.auc if v is not None]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_accuracy(self):
        return float(np.mean(self.accuracy))

    @property
    def mean_f1(self):
        return float(np.mean(self.f1))

    def to_dict(self):
        return {"mean_auc": self.mean_auc, "mean_accuracy": self.mean_accuracy, "mean_f1": self.mean_f1,
                "auc": self.auc, "accuracy": self.accuracy, "f1": self.f1}


def cross_validate(kind, hyperparams, train, folds=10, seed=0, n_jobs=1):
    parts = fold_indices(train.labels, folds, seed)
    n = len(train)

    def one(f):
        test_idx = parts[f]
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        clf = model_class(kind)(seed=derive_seed(seed, "cv", f), **(hyperparams or {}))
        clf.fit(train.rows[mask], train.labels[mask])
        m = classification_metrics(train.labels[test_idx], clf.positive_proba(train.rows[test_idx]))
        return m.auc, m.accuracy, m.f1

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            out = list(ex.map(one, range(folds)))
    else:
        out = [one(f) for f in range(folds)]
    return CVResult([o[0] for o in out], [o[1] for o in out], [o[2] for o in out])


def grid_points(grid):
    """Cartesian product of a ``{name: [values]}`` grid in declaration order."""
    if not grid:
        return [{}]
    names = list(grid)
    for name in names:
        if not isinstance(grid[name], (list, tuple)) or not grid[name]:
            raise ModelError(f"grid entry {name!r} must be a non-empty list")
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[k] for k in names))]


def grid_search(kind, grid, train, seed=0, folds=10, base=None, n_jobs=1):
    """Return ``(best_hyperparams, best_mean_auc)``; ties keep the earliest point."""
    best, best_auc = None, -np.inf
    for point in grid_points(grid):
        hp = {**(base or {}), **point}
        score = cross_validate(kind, hp, train, folds=folds, seed=seed, n_jobs=n_jobs).mean_auc
        if best is None or score > best_auc:
            best, best_auc = hp, score
    return best, float(best_auc)


def default_grids():
    """Bundled per-kind grids (shapes only; values are not tuned for any dataset)."""
    text = resources.files("egattack").joinpath("default_grids.json").read_text(encoding="utf-8")
    return json.loads(text)


def save_model(clf, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(clf.to_dict()))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh))
