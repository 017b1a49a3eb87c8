"""CART trees stored as flat node arrays.

One builder serves classification (gini / entropy over 0/1 targets, with
sample weights for boosting) and regression (squared error, used by gradient
boosting). Prediction walks all rows down the tree level by level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    impurity: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def _routing(self):
        # leaves route to themselves with an always-true test, so every row can
        # take exactly ``depth`` steps without tracking which ones have stopped
        r = self.__dict__.get("_route")
        if r is None:
            leaf = self.feature == LEAF
            ids = np.arange(self.n_nodes)
            r = (np.where(leaf, 0, self.feature), np.where(leaf, np.inf, self.threshold),
                 np.where(leaf, ids, self.left), np.where(leaf, ids, self.right), self.depth)
            self.__dict__["_route"] = r
        return r

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        feat, thr, left, right, depth = self._routing()
        rows = np.arange(X.shape[0])
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(depth):
            node = np.where(X[rows, feat[node]] <= thr[node], left[node], right[node])
        return node

    def predict_value(self, X):
        return self.value[self.apply(X)]

    def decision_path(self, x):
        """Node ids visited by a single row, root first."""
        path, node = [], 0
        while self.feature[node] != LEAF:
            path.append(node)
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        path.append(node)
        return path

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "weight": self.weight.tolist(),
            "impurity": self.impurity.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            np.asarray(d["weight"], dtype=float),
            np.asarray(d["impurity"], dtype=float),
        )


def resolve_max_features(max_features, d):
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(max_features, float):
        return max(1, min(d, int(max_features * d)))
    return max(1, min(d, int(max_features)))


def _impurity(w, wy, wy2, criterion):
    """Node impurity from weighted sums (vectorised over candidate nodes)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "mse":
            return np.maximum(wy2 / w - (wy / w) ** 2, 0.0)
        p = np.clip(wy / w, 0.0, 1.0)
        if criterion == "gini":
            return 2.0 * p * (1.0 - p)
        q = 1.0 - p
        return -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
                 + np.where(q > 0, q * np.log2(np.where(q > 0, q, 1)), 0.0))


def _best_split(X, y, w, feats, criterion, min_leaf, n_required):
    """Return ``(cost, feature, threshold)`` of the lowest-cost split, or None.

    At least ``n_required`` features from ``feats`` are examined; the scan
    continues past that while no valid split has been found.
    """
    n = len(y)
    best = None
    examined = 0
    for f in feats:
        if examined >= n_required and best is not None:
            break
        examined += 1
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ws = w[order]
        wys = ws * y[order]
        cw = np.cumsum(ws)[:-1]
        cwy = np.cumsum(wys)[:-1]
        W, WY = ws.sum(), wys.sum()
        pos = np.arange(1, n)  # left-child size
        ok = (xs[:-1] < xs[1:]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if not ok.any():
            continue
        wl, wyl = cw[ok], cwy[ok]
        wr, wyr = W - wl, WY - wyl
        if criterion == "mse":
            cwy2 = np.cumsum(wys * y[order])[:-1]
            wy2l = cwy2[ok]
            wy2r = (wys * y[order]).sum() - wy2l
        else:
            wy2l = wy2r = None
        cost = wl * _impurity(wl, wyl, wy2l, criterion) + wr * _impurity(wr, wyr, wy2r, criterion)
        cost = np.where((wl > 0) & (wr > 0), cost, np.inf)
        j = int(np.argmin(cost))
        if not np.isfinite(cost[j]):
            continue
        if best is None or cost[j] < best[0] - 1e-12:
            i = np.flatnonzero(ok)[j]
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] <= thr < xs[i + 1]:
                thr = xs[i]
            best = (float(cost[j]), int(f), float(thr))
    return best


def build_tree(X, y, sample_weight=None, criterion="gini", max_depth=None,
               min_samples_split=2, min_samples_leaf=1, max_features=None, rng=None):
    """Grow a CART tree greedily, depth-first."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    k = resolve_max_features(max_features, d)
    if rng is None:
        rng = np.random.default_rng(0)

    feature, threshold, left, right, value, weight, impurity = [], [], [], [], [], [], []

    def new_node(idx):
        ww = w[idx]
        W = ww.sum()
        wy = (ww * y[idx]).sum()
        wy2 = (ww * y[idx] ** 2).sum() if criterion == "mse" else None
        imp = float(_impurity(np.array(W), np.array(wy), None if wy2 is None else np.array(wy2), criterion))
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(wy / W) if W > 0 else 0.0)
        weight.append(float(W))
        impurity.append(imp)
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if impurity[node] <= 1e-14 or len(idx) < max(min_samples_split, 2 * min_samples_leaf):
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        feats = rng.permutation(d) if k < d else np.arange(d)
        found = _best_split(X[idx], y[idx], w[idx], feats, criterion, min_samples_leaf, k)
        if found is None:
            continue
        _, f, thr = found
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        np.asarray(weight, dtype=float),
        np.asarray(impurity, dtype=float),
    )
