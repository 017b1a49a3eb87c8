"""Per-instance, model-agnostic feature attributions.

Four explainers share one output type: exact Shapley values by coalition
enumeration, Kernel SHAP (Shapley-kernel weighted least squares over sampled
coalitions), a LIME-style weighted ridge surrogate, and a local decision-tree
rule surrogate that also yields thresholds and guided directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExplainerError
from .models.tree import build_tree
from .seeding import rng_for

EXACT_SHAP = "EXACT_SHAP"
KERNEL_SHAP = "KERNEL_SHAP"
LIME = "LIME"
RULE = "RULE"
EXPLAINER_KINDS = (EXACT_SHAP, KERNEL_SHAP, LIME, RULE)
ALIASES = {"SHAP": "SHAP", "EXACT": EXACT_SHAP, "KERNEL": KERNEL_SHAP,
           "PYEXPLAINER": RULE, "RULES": RULE}

MAX_EXACT_FEATURES = 12
INCREASE = "increase-toward-positive"
DECREASE = "decrease-toward-positive"


@dataclass(frozen=True)
class Rule:
    feature: int
    threshold: float
    direction: str
    # which side of the threshold the instance sits on
    instance_side: str = "<="

    def to_dict(self):
        return {"feature": self.feature, "threshold": self.threshold,
                "direction": self.direction, "instance_side": self.instance_side}


@dataclass
class Explanation:
    instance_index: int
    attributions: np.ndarray
    explainer_kind: str
    base_value: float | None = None
    rules: list = field(default_factory=list)
    no_rule: bool = False

    def __post_init__(self):
        self.attributions = np.asarray(self.attributions, dtype=float)
        if self.rules and self.explainer_kind != RULE:
            raise ExplainerError("only rule explanations carry rules")

    def direction_for(self, feature):
        """Guided direction of the first (root-most) rule on ``feature``, if any."""
        for r in self.rules:
            if r.feature == feature:
                return r.direction
        return None

    def to_dict(self):
        return {
            "instance_index": int(self.instance_index),
            "explainer_kind": self.explainer_kind,
            "attributions": [float(a) for a in self.attributions],
            "base_value": self.base_value,
            "rules": [r.to_dict() for r in self.rules],
            "no_rule": self.no_rule,
        }


@dataclass(frozen=True)
class ImportanceRank:
    order: tuple
    scores: tuple

    def __len__(self):
        return len(self.order)

    def top(self, k):
        return list(self.order[:k])

    def bottom(self, k):
        return list(self.order[len(self.order) - k:])


def importance_rank(expl):
    """Features by descending |attribution|; equal magnitudes keep index order."""
    a = np.asarray(expl.attributions if isinstance(expl, Explanation) else expl, dtype=float)
    order = np.argsort(-np.abs(a), kind="stable")
    return ImportanceRank(tuple(int(i) for i in order), tuple(float(a[i]) for i in order))


def resolve_kind(name, n_features):
    """Map a user-facing name onto a concrete explainer kind."""
    key = str(name).upper().replace("-", "_")
    key = ALIASES.get(key, key)
    if key == "SHAP":
        return EXACT_SHAP if n_features <= MAX_EXACT_FEATURES else KERNEL_SHAP
    if key not in EXPLAINER_KINDS:
        raise ExplainerError(f"unknown explainer {name!r}; expected one of {list(EXPLAINER_KINDS) + ['SHAP']}")
    return key


def background_sample(rows, size, seed):
    rows = np.asarray(rows, dtype=float)
    if len(rows) <= size:
        return rows.copy()
    idx = np.sort(rng_for(seed, "background").choice(len(rows), size=size, replace=False))
    return rows[idx]


def _p1(clf, Z):
    return np.asarray(clf.positive_proba(Z), dtype=float)


def _coalition_values(clf, x, background, masks):
    """v(S) for each boolean mask row: mean p1 over background with S taken from x."""
    B = len(background)
    m, d = masks.shape
    hybrid = np.where(masks[:, None, :], x[None, None, :], background[None, :, :])
    return _p1(clf, hybrid.reshape(m * B, d)).reshape(m, B).mean(axis=1)


def _all_masks(d):
    codes = np.arange(2**d)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def exact_shapley(clf, x, background, instance_index=0):
    """Shapley values by enumerating all 2^d coalitions."""
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    d = x.shape[0]
    if d > MAX_EXACT_FEATURES:
        raise ExplainerError(f"exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {d}")
    if background.ndim != 2 or len(background) == 0:
        raise ExplainerError("background set must be a non-empty 2-D array")
    masks = _all_masks(d)
    v = _coalition_values(clf, x, background, masks)
    sizes = masks.sum(axis=1)
    # weight for adding a feature to a coalition of size s
    w = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)])
    codes = np.arange(2**d)
    phi = np.zeros(d)
    for i in range(d):
        without = codes[~masks[:, i]]
        with_i = without | (1 << i)
        phi[i] = np.sum(w[sizes[without]] * (v[with_i] - v[without]))
    return Explanation(instance_index, phi, EXACT_SHAP, base_value=float(v[0]))


def _shapley_kernel(d, s):
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def kernel_shap(clf, x, background, n_coalitions=2000, seed=0, instance_index=0):
    """Kernel SHAP with the efficiency constraint imposed exactly.

    When the budget covers every coalition they are all used with their
    exact kernel weights, which reproduces the Shapley values. Otherwise
    coalitions are drawn with probability proportional to the kernel (each
    draw paired with its complement) and weighted equally.
    """
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    d = x.shape[0]
    if background.ndim != 2 or len(background) == 0:
        raise ExplainerError("background set must be a non-empty 2-D array")
    if n_coalitions < 2 * d or n_coalitions < 2:
        raise ExplainerError(f"need at least {2 * d} coalitions for {d} features, got {n_coalitions}")
    ends = _coalition_values(clf, x, background, np.array([[False] * d, [True] * d]))
    base, full = float(ends[0]), float(ends[1])
    if d == 1:
        return Explanation(instance_index, np.array([full - base]), KERNEL_SHAP, base_value=base)

    if n_coalitions - 2 >= 2**d - 2:
        masks = _all_masks(d)[1:-1]
        sizes = masks.sum(axis=1)
        weights = np.array([_shapley_kernel(d, s) for s in sizes])
    else:
        rng = rng_for(seed, "kernel-shap")
        size_p = np.array([_shapley_kernel(d, s) * math.comb(d, s) for s in range(1, d)])
        size_p /= size_p.sum()
        n_pairs = (n_coalitions - 2) // 2
        sizes = rng.choice(np.arange(1, d), size=n_pairs, p=size_p)
        masks = np.zeros((2 * n_pairs, d), dtype=bool)
        for j, s in enumerate(sizes):
            chosen = rng.permutation(d)[:s]
            masks[2 * j, chosen] = True
            masks[2 * j + 1] = ~masks[2 * j]
        weights = np.ones(len(masks))

    v = _coalition_values(clf, x, background, masks) - base
    Z = masks.astype(float)
    # eliminate the last coefficient via sum(phi) = full - base
    total = full - base
    A = Z[:, :-1] - Z[:, -1:]
    b = v - Z[:, -1] * total
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], b * sw, rcond=None)
    phi = np.append(coef, total - coef.sum())
    return Explanation(instance_index, phi, KERNEL_SHAP, base_value=base)


def default_kernel_width(n_features):
    return 0.75 * math.sqrt(n_features)


def _local_samples(x, std, n_samples, rng):
    active = std > 0
    noise = rng.standard_normal((n_samples, len(x)))
    Z = x + noise * std
    return Z, noise, active


def lime(clf, x, stats, n_samples=1000, kernel_width=None, seed=0, ridge=1e-3, instance_index=0):
    """Weighted ridge surrogate on Gaussian perturbations around ``x``.

    The regression runs on standardised offsets ``(z - x) / std``, so each
    coefficient is the change in risk score per one-std move of that feature.
    """
    x = np.asarray(x, dtype=float)
    std = np.asarray(stats.std if hasattr(stats, "std") else stats, dtype=float)
    d = len(x)
    if n_samples < 10 * d:
        raise ExplainerError(f"LIME needs at least {10 * d} samples for {d} features, got {n_samples}")
    if not np.any(std > 0):
        raise ExplainerError("every feature has zero std; nothing to perturb")
    width = default_kernel_width(d) if kernel_width is None else float(kernel_width)
    rng = rng_for(seed, "lime")
    Z, U, active = _local_samples(x, std, n_samples, rng)
    U = U * active
    dist2 = (U**2).sum(axis=1)
    w = np.exp(-dist2 / width**2)
    y = _p1(clf, Z)
    # centre by weighted means so the intercept stays unpenalised
    W = w.sum()
    um = (w @ U) / W
    ym = (w @ y) / W
    Uc, yc = U[:, active] - um[active], y - ym
    G = (Uc * w[:, None]).T @ Uc + ridge * np.eye(int(active.sum()))
    beta = np.linalg.solve(G, (Uc * w[:, None]).T @ yc)
    coef = np.zeros(d)
    coef[active] = beta
    return Explanation(instance_index, coef, LIME, base_value=float(ym - um @ coef))


def rule_surrogate(clf, x, train_rows, std=None, n_samples=1000, seed=0, max_depth=3, instance_index=0):
    """Local depth-limited decision-tree surrogate around ``x``.

    Rules come from the decision path of ``x``. A rule's direction says which
    side of its threshold carries the higher positive-class share in the
    surrogate. Attributions are impurity decreases of path features, signed
    by direction; off-path features get 0.
    """
    x = np.asarray(x, dtype=float)
    train_rows = np.asarray(train_rows, dtype=float)
    if train_rows.ndim != 2 or len(train_rows) == 0:
        raise ExplainerError("rule surrogate needs a non-empty training set")
    d = len(x)
    if std is None:
        std = train_rows.std(axis=0, ddof=1) if len(train_rows) > 1 else np.zeros(d)
    std = np.asarray(std, dtype=float)
    rng = rng_for(seed, "rule")
    Z, _, _ = _local_samples(x, std, n_samples, rng)
    Z = np.vstack([x[None, :], Z])
    labels = clf.predict(Z)
    attributions = np.zeros(d)
    if len(np.unique(labels)) < 2:
        return Explanation(instance_index, attributions, RULE, no_rule=True)
    tree = build_tree(Z, labels, max_depth=max_depth, rng=rng)
    path = tree.decision_path(x)
    rules = []
    for node in path[:-1]:
        f = int(tree.feature[node])
        l, r = tree.left[node], tree.right[node]
        direction = INCREASE if tree.value[r] > tree.value[l] else DECREASE
        side = "<=" if x[f] <= tree.threshold[node] else ">"
        decrease = (tree.weight[node] * tree.impurity[node] - tree.weight[l] * tree.impurity[l]
                    - tree.weight[r] * tree.impurity[r]) / tree.weight[0]
        sign = 1.0 if direction == INCREASE else -1.0
        attributions[f] += sign * max(decrease, 0.0)
        rules.append(Rule(f, float(tree.threshold[node]), direction, side))
    if not rules:
        return Explanation(instance_index, attributions, RULE, no_rule=True)
    return Explanation(instance_index, attributions, RULE, rules=rules)


def explain(kind, clf, x, *, background=None, stats=None, train_rows=None, seed=0,
            n_coalitions=2000, lime_samples=1000, kernel_width=None, rule_samples=1000,
            instance_index=0):
    """Dispatch to one explainer by kind."""
    if kind == EXACT_SHAP:
        return exact_shapley(clf, x, background, instance_index=instance_index)
    if kind == KERNEL_SHAP:
        return kernel_shap(clf, x, background, n_coalitions, seed=seed, instance_index=instance_index)
    if kind == LIME:
        return lime(clf, x, stats, lime_samples, kernel_width, seed=seed, instance_index=instance_index)
    if kind == RULE:
        return rule_surrogate(clf, x, train_rows, None if stats is None else stats.std,
                              rule_samples, seed=seed, instance_index=instance_index)
    raise ExplainerError(f"unknown explainer kind {kind!r}")
