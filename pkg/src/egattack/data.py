"""Tabular data ingestion and preparation.

Covers CSV loading, train/test splitting, Spearman collinearity filtering,
SMOTE oversampling of the training minority class, test-set undersampling and
the training-set feature statistics that size every perturbation.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import rankdata

from .errors import DataError
from .jsonio import fmt_float
from .seeding import rng_for


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple
    non_negative: tuple
    label_name: str = "label"

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        flags = tuple(bool(f) for f in self.non_negative)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "non_negative", flags)
        if any(not n for n in names):
            raise DataError("feature names must be non-empty")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if len(flags) != len(names):
            raise DataError(f"non_negative has {len(flags)} flags for {len(names)} features")

    @property
    def n_features(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def subset(self, idx):
        return FeatureSchema(
            tuple(self.names[i] for i in idx),
            tuple(self.non_negative[i] for i in idx),
            self.label_name,
        )


@dataclass
class Dataset:
    schema: FeatureSchema
    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim == 1 and self.rows.size == 0:
            self.rows = self.rows.reshape(0, self.schema.n_features)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.rows.ndim != 2 or self.rows.shape[1] != self.schema.n_features:
            raise DataError(f"rows shape {self.rows.shape} does not match {self.schema.n_features} features")
        if self.labels.shape != (self.rows.shape[0],):
            raise DataError(f"{self.rows.shape[0]} rows but {self.labels.shape[0]} labels")
        if not np.all(np.isfinite(self.rows)):
            raise DataError("rows contain missing or non-finite values")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be 0 or 1")
        nn = np.array(self.schema.non_negative, dtype=bool)
        if nn.any() and len(self.rows) and np.any(self.rows[:, nn] < 0):
            bad = [self.schema.names[j] for j in np.flatnonzero(nn) if np.any(self.rows[:, j] < 0)]
            raise DataError(f"features flagged non-negative hold negative values: {bad}")

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n_features(self):
        return self.schema.n_features

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, self.rows[idx], self.labels[idx])

    def select_features(self, idx):
        idx = list(idx)
        return Dataset(self.schema.subset(idx), self.rows[:, idx], self.labels)

    def class_counts(self):
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))


@dataclass(frozen=True)
class FeatureStats:
    names: tuple
    std: np.ndarray
    mean: np.ndarray

    def std_of(self, name):
        return float(self.std[self.names.index(name)])

    def to_dict(self):
        return {
            "names": list(self.names),
            "std": [float(v) for v in self.std],
            "mean": [float(v) for v in self.mean],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), np.asarray(d["std"], float), np.asarray(d["mean"], float))


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.9
    seed: int = 0
    stratify: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _resolve_non_negative(policy, names, rows):
    if policy is None or policy == "infer-all-true":
        return [True] * len(names)
    if policy == "infer-from-data":
        return [bool(np.all(rows[:, j] >= 0)) for j in range(len(names))]
    if policy == "all-false":
        return [False] * len(names)
    if isinstance(policy, dict):
        unknown = set(policy) - set(names)
        if unknown:
            raise DataError(f"non_negative flags name unknown features: {sorted(unknown)}")
        return [bool(policy.get(n, False)) for n in names]
    if isinstance(policy, (list, tuple)):
        if len(policy) != len(names):
            raise DataError(f"{len(policy)} non_negative flags for {len(names)} features")
        return [bool(v) for v in policy]
    raise DataError(f"unrecognised non_negative policy {policy!r}")


def load_csv(path, label_name, non_negative_policy="infer-all-true"):
    """Read a numeric CSV with a header row into a :class:`Dataset`.

    Row numbers in error messages count data rows from 1 (the header is
    not counted).
    """
    if not os.path.isfile(path):
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected") from None
        if label_name not in header:
            raise DataError(f"{path}: label column {label_name!r} not in header {header}")
        li = header.index(label_name)
        feat_cols = [j for j in range(len(header)) if j != li]
        names = [header[j] for j in feat_cols]
        rows, labels = [], []
        for r, rec in enumerate(reader, start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for j, cell in enumerate(rec):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: row {r}, column {header[j]!r}: missing value")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {r}, column {header[j]!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {r}, column {header[j]!r}: non-finite value {cell!r}")
                vals.append(v)
            lab = vals[li]
            if lab not in (0.0, 1.0):
                raise DataError(f"{path}: row {r}: non-binary label {rec[li].strip()!r} in {label_name!r}")
            labels.append(int(lab))
            rows.append([vals[j] for j in feat_cols])
    arr = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    flags = _resolve_non_negative(non_negative_policy, names, arr)
    return Dataset(FeatureSchema(tuple(names), tuple(flags), label_name), arr, np.asarray(labels, dtype=np.int64))


def write_csv(ds, path):
    """Write ``ds`` back out; the label column goes last."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.schema.names) + [ds.schema.label_name])
        for row, lab in zip(ds.rows, ds.labels):
            w.writerow([fmt_float(v) for v in row] + [int(lab)])


def split(ds, cfg):
    n = len(ds)
    if n < 2:
        raise DataError(f"cannot split a dataset with {n} row(s)")
    n_train = int(math.floor(n * cfg.train_fraction + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    rng = rng_for(cfg.seed, "split")
    if cfg.stratify:
        train_idx, test_idx = [], []
        for c in (0, 1):
            idx = np.flatnonzero(ds.labels == c)
            idx = idx[rng.permutation(len(idx))]
            k = int(math.floor(len(idx) * cfg.train_fraction + 0.5))
            train_idx.append(idx[:k])
            test_idx.append(idx[k:])
        train_idx = np.sort(np.concatenate(train_idx))
        test_idx = np.sort(np.concatenate(test_idx))
        # stratified rounding may miss the global target by a row or two
        if len(train_idx) == 0 or len(test_idx) == 0:
            raise DataError("stratified split left an empty partition")
        train_idx = train_idx[rng.permutation(len(train_idx))]
        test_idx = test_idx[rng.permutation(len(test_idx))]
    else:
        perm = rng.permutation(n)
        train_idx, test_idx = perm[:n_train], perm[n_train:]
    return ds.take(train_idx), ds.take(test_idx)


def spearman_matrix(rows):
    """Spearman correlation matrix; constant columns correlate 0 with everything."""
    n, d = rows.shape
    ranks = np.column_stack([rankdata(rows[:, j], method="average") for j in range(d)]) if d else rows
    centered = ranks - ranks.mean(axis=0)
    norm = np.sqrt((centered**2).sum(axis=0))
    const = norm == 0
    norm[const] = 1.0
    z = centered / norm
    rho = z.T @ z
    rho[const, :] = 0.0
    rho[:, const] = 0.0
    np.fill_diagonal(rho, 1.0)
    return np.clip(rho, -1.0, 1.0)


def spearman_filter(train, threshold=0.7):
    """Drop features until every retained pair has ``|rho| < threshold``.

    The most correlated violating pair is resolved first. Of that pair, the
    feature with the larger mean absolute correlation to the other retained
    features goes; on a tie the earlier column stays.
    """
    if len(train) == 0:
        raise DataError("cannot filter an empty dataset")
    if not 0.0 < threshold <= 1.0:
        raise DataError(f"threshold must lie in (0, 1], got {threshold}")
    rho = np.abs(spearman_matrix(train.rows))
    keep = list(range(train.n_features))
    dropped = []
    while len(keep) > 1:
        sub = rho[np.ix_(keep, keep)]
        iu = np.triu_indices(len(keep), k=1)
        vals = sub[iu]
        viol = np.flatnonzero(vals >= threshold)
        if viol.size == 0:
            break
        top = viol[np.argmax(vals[viol])]
        a, b = iu[0][top], iu[1][top]
        others = sub.sum(axis=1) - 1.0
        mean_a = others[a] / (len(keep) - 1)
        mean_b = others[b] / (len(keep) - 1)
        drop = a if mean_a > mean_b else b
        dropped.append(train.schema.names[keep[drop]])
        del keep[drop]
    return train.select_features(keep), dropped


def smote_samples(minority, n_new, k_neighbors, rng):
    """Return ``(synthetic_rows, base_idx, neighbour_idx, u)``."""
    m = len(minority)
    k = min(k_neighbors, m - 1)
    tree = cKDTree(minority)
    _, nn = tree.query(minority, k=k + 1)
    nn = np.asarray(nn).reshape(m, k + 1)
    # drop self; duplicate points may not come back first, so filter by index
    neigh = np.empty((m, k), dtype=np.int64)
    for i in range(m):
        row = [j for j in nn[i] if j != i][:k]
        neigh[i] = row
    base = rng.integers(0, m, size=n_new)
    pick = rng.integers(0, k, size=n_new)
    u = rng.random(n_new)
    other = neigh[base, pick]
    synth = minority[base] + u[:, None] * (minority[other] - minority[base])
    return synth, base, other, u


def smote(train, k_neighbors=5, seed=0):
    """Oversample the minority class until both classes have equal counts."""
    n0, n1 = train.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError("SMOTE needs both classes present")
    if k_neighbors < 1:
        raise DataError("k_neighbors must be >= 1")
    minority_label = 1 if n1 < n0 else 0
    n_min, n_maj = min(n0, n1), max(n0, n1)
    if n_min < 2:
        raise DataError(f"SMOTE needs at least 2 minority rows, got {n_min}")
    if n_min == n_maj:
        return Dataset(train.schema, train.rows.copy(), train.labels.copy())
    minority = train.rows[train.labels == minority_label]
    synth, *_ = smote_samples(minority, n_maj - n_min, k_neighbors, rng_for(seed, "smote"))
    rows = np.vstack([train.rows, synth])
    labels = np.concatenate([train.labels, np.full(len(synth), minority_label, dtype=np.int64)])
    return Dataset(train.schema, rows, labels)


def undersample_test(test, seed=0):
    """Randomly drop majority rows down to the minority count; order is kept."""
    n0, n1 = test.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError("undersampling needs both classes present")
    if n0 == n1:
        return Dataset(test.schema, test.rows.copy(), test.labels.copy())
    majority = 0 if n0 > n1 else 1
    maj_idx = np.flatnonzero(test.labels == majority)
    keep_maj = rng_for(seed, "undersample").choice(maj_idx, size=min(n0, n1), replace=False)
    idx = np.sort(np.concatenate([np.flatnonzero(test.labels != majority), keep_maj]))
    return test.take(idx)


def feature_stats(train):
    if len(train) < 2:
        raise DataError(f"feature statistics need at least 2 rows, got {len(train)}")
    return FeatureStats(
        train.schema.names,
        train.rows.std(axis=0, ddof=1),
        train.rows.mean(axis=0),
    )


@dataclass
class Prepared:
    """Output of :func:`prepare`: everything downstream stages consume."""

    train: Dataset
    test: Dataset
    stats: FeatureStats
    dropped: list = field(default_factory=list)
    train_raw_counts: tuple = (0, 0)


def prepare(ds, split_cfg, filter_threshold=0.7, use_smote=True, k_neighbors=5,
            smote_seed=0, undersample=False, undersample_seed=0):
    """Split, filter, compute stats on pre-SMOTE rows, then oversample."""
    train, test = split(ds, split_cfg)
    dropped = []
    if filter_threshold is not None:
        train, dropped = spearman_filter(train, filter_threshold)
        keep = [ds.schema.index(n) for n in train.schema.names]
        test = test.select_features(keep)
    stats = feature_stats(train)
    counts = train.class_counts()
    if use_smote:
        train = smote(train, k_neighbors, smote_seed)
    if undersample:
        test = undersample_test(test, undersample_seed)
    return Prepared(train, test, stats, dropped, counts)
