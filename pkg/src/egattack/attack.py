"""Explanation-guided l0 attack.

Each correctly predicted test row has its features ranked once by an
explainer. For prefix sizes 1..max_k the top features are nudged by one
training standard deviation, the attack success rate (ASR) is measured, and
k is picked with the reverse elbow rule. Bottom-of-rank (BL) and random
non-top (BR) feature sets serve as controls.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import explainers as xai
from .errors import AttackError
from .jsonio import fmt_float
from .seeding import derive_seed, rng_for

BOTH_PICK_BEST = "BOTH_PICK_BEST"
GUIDED = "GUIDED"
POLICIES = (BOTH_PICK_BEST, GUIDED)


@dataclass
class AttackConfig:
    explainer_kind: str = xai.EXACT_SHAP
    max_k: int | None = None
    lambda_weight: float = 1.0
    direction_policy: str | None = None
    seed: int = 0
    n_background: int = 100
    n_coalitions: int = 2000
    lime_samples: int = 1000
    kernel_width: float | None = None
    rule_samples: int = 1000
    n_jobs: int = 1

    def resolved(self, n_features):
        """Copy with ``max_k`` and ``direction_policy`` filled in and checked."""
        half = n_features // 2
        if half < 1:
            raise AttackError(f"need at least 2 features to attack, got {n_features}")
        max_k = half if self.max_k is None else int(self.max_k)
        if not 1 <= max_k <= half:
            raise AttackError(f"max_k must lie in [1, {half}] for {n_features} features, got {max_k}")
        policy = self.direction_policy or (GUIDED if self.explainer_kind == xai.RULE else BOTH_PICK_BEST)
        if policy not in POLICIES:
            raise AttackError(f"unknown direction policy {policy!r}")
        return AttackConfig(**{**self.__dict__, "max_k": max_k, "direction_policy": policy})


@dataclass
class Candidate:
    row: np.ndarray
    modified: tuple
    directions: tuple


@dataclass
class AdversarialExample:
    instance_index: int
    original: np.ndarray
    perturbed: np.ndarray
    modified: tuple
    directions: tuple
    flipped: bool
    p_before: float
    p_after: float
    k_used: int
    original_label: int
    immovable: bool = False

    @property
    def l0(self):
        return int(np.count_nonzero(self.original != self.perturbed))

    @property
    def prob_delta(self):
        # |change| of the originally predicted class's probability; equal for both classes
        return abs(self.p_before - self.p_after)

    def to_dict(self):
        return {
            "instance": int(self.instance_index),
            "original": [float(v) for v in self.original],
            "perturbed": [float(v) for v in self.perturbed],
            "modified": [int(i) for i in self.modified],
            "directions": [int(s) for s in self.directions],
            "p_before": float(self.p_before),
            "p_after": float(self.p_after),
            "flipped": bool(self.flipped),
            "k_used": int(self.k_used),
            "immovable": bool(self.immovable),
        }


@dataclass
class AsrCurve:
    asr: list
    chosen_k: int
    prefixes: list = field(default_factory=list)

    def to_csv(self):
        return "k,asr\n" + "".join(f"{i + 1},{fmt_float(v)}\n" for i, v in enumerate(self.asr))


def correct_subset(clf, test):
    """Indices and rows of ``test`` the model already gets right, in order."""
    pred = clf.predict(test.rows)
    idx = np.flatnonzero(pred == test.labels)
    return idx, test.take(idx)


def prefix_combinations(rank, max_k):
    order = rank.order if isinstance(rank, xai.ImportanceRank) else tuple(rank)
    if max_k < 1:
        raise AttackError("max_k must be >= 1")
    max_k = min(max_k, len(order))
    return [tuple(order[:i]) for i in range(1, max_k + 1)]


def _moves(x, feature_set, std, non_negative, signs):
    """Apply one sign per feature; negative results on flagged features are skipped."""
    row = x.copy()
    modified, directions = [], []
    for f, s in zip(feature_set, signs):
        if s == 0:
            continue
        v = x[f] + s * std[f]
        if non_negative[f] and v < 0:
            continue
        if v != x[f]:
            row[f] = v
            modified.append(int(f))
            directions.append(int(s))
    return Candidate(row, tuple(modified), tuple(directions))


def guided_signs(feature_set, expl, current_pred):
    """+1/-1/0 per feature so each move pushes the risk score away from ``current_pred``.

    Rule directions take precedence; without a rule, the attribution sign is
    used, and a zero attribution gives no move.
    """
    want_up = current_pred == 0
    signs = []
    for f in feature_set:
        direction = expl.direction_for(f) if expl is not None else None
        if direction is not None:
            up = direction == xai.INCREASE
        elif expl is not None and expl.attributions[f] != 0:
            up = expl.attributions[f] > 0
        else:
            signs.append(0)
            continue
        signs.append(1 if up == want_up else -1)
    return signs


def transform_instance(x, feature_set, std, non_negative, policy=BOTH_PICK_BEST, expl=None, current_pred=None):
    """Candidate perturbed rows; an empty list means the instance is immovable."""
    x = np.asarray(x, dtype=float)
    std = np.asarray(std, dtype=float)
    feature_set = [int(f) for f in feature_set]
    if not feature_set:
        raise AttackError("feature set must be non-empty")
    if policy == GUIDED:
        if current_pred is None:
            raise AttackError("guided perturbation needs the current prediction")
        sign_sets = [guided_signs(feature_set, expl, current_pred)]
    elif policy == BOTH_PICK_BEST:
        sign_sets = itertools.product((1, -1), repeat=len(feature_set))
    else:
        raise AttackError(f"unknown direction policy {policy!r}")
    out, seen = [], set()
    for signs in sign_sets:
        c = _moves(x, feature_set, std, non_negative, signs)
        if not c.modified:
            continue
        key = c.row.tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
    return out


def attack_instance(clf, x, label, feature_set, std, non_negative, policy=BOTH_PICK_BEST,
                    expl=None, instance_index=0):
    """Best candidate: the flip with the largest original-class drop, else the largest drop."""
    x = np.asarray(x, dtype=float)
    p_x = clf.predict_proba(x)
    pred = int(p_x[1] >= 0.5)
    if pred != label:
        raise AttackError(f"instance {instance_index} is not correctly predicted")
    k = len(feature_set)
    cands = transform_instance(x, feature_set, std, non_negative, policy, expl, pred)
    if not cands:
        return AdversarialExample(instance_index, x, x.copy(), (), (), False, float(p_x[1]), float(p_x[1]),
                                  k, label, immovable=True)
    P = clf.predict_proba(np.vstack([c.row for c in cands]))
    p1 = P[:, 1]
    flips = (p1 >= 0.5).astype(int) != pred
    drop = p_x[pred] - P[:, pred]
    pool = np.flatnonzero(flips) if flips.any() else np.arange(len(cands))
    best = pool[np.argmax(drop[pool])]
    c = cands[best]
    return AdversarialExample(instance_index, x, c.row, c.modified, c.directions, bool(flips[best]),
                              float(p_x[1]), float(p1[best]), k, label)


def asr(results):
    if len(results) == 0:
        raise AttackError("ASR is undefined for an empty result set")
    return sum(1 for r in results if r.flipped) / len(results)


def reverse_elbow(asr_values):
    """Pick k where successive ASR gains stop growing.

    k = 1 when there is one value or the second ASR is below the first.
    Otherwise, at the first step whose gain does not exceed the previous
    gain, k is the size of the previous prefix; if gains keep growing, k is
    the full length. Values may be fractions or percentages.
    """
    v = [float(a) for a in asr_values]
    if not v:
        raise AttackError("reverse elbow needs at least one ASR value")
    hi = 100.0 if max(v) > 1.0 else 1.0
    if any(not 0.0 <= a <= hi for a in v):
        raise AttackError(f"ASR values must lie in [0, 1] (or [0, 100] as percentages): {v}")
    if len(v) == 1 or v[1] < v[0]:
        return 1
    gains = np.diff(v)
    for i in range(1, len(gains)):
        if gains[i] <= gains[i - 1]:
            return i + 1
    return len(v)


def baseline_bl(rank, k):
    order = rank.order if isinstance(rank, xai.ImportanceRank) else tuple(rank)
    n = len(order)
    if k < 1 or n - k < k:
        raise AttackError(f"BL with k={k} would overlap the top-{k} of {n} features")
    return tuple(order[n - k:])


def baseline_br(rank, k, seed):
    order = rank.order if isinstance(rank, xai.ImportanceRank) else tuple(rank)
    n = len(order)
    if k < 1 or n - k < k:
        raise AttackError(f"BR with k={k} needs at least {k} features outside the top-{k}; have {n - k}")
    rest = np.array(order[k:])
    pick = rng_for(seed, "br").choice(len(rest), size=k, replace=False)
    return tuple(int(f) for f in rest[np.sort(pick)])


@dataclass
class AttackResult:
    curve: AsrCurve
    examples: list
    objective: float
    explanations: list
    ranks: list
    correct_index: np.ndarray
    by_k: list
    baselines: dict = field(default_factory=dict)
    baseline_examples: dict = field(default_factory=dict)
    config: AttackConfig | None = None

    @property
    def asr_at_k(self):
        return self.curve.asr[self.curve.chosen_k - 1]

    @property
    def immovable(self):
        return sum(1 for e in self.examples if e.immovable)


def explain_instances(clf, rows, instance_ids, cfg, stats, train_rows):
    """One explanation per row, each drawing from its own seed stream."""
    kind = cfg.explainer_kind
    background = None
    if kind in (xai.EXACT_SHAP, xai.KERNEL_SHAP):
        background = xai.background_sample(train_rows, cfg.n_background, cfg.seed)

    def one(j):
        return xai.explain(
            kind, clf, rows[j], background=background, stats=stats, train_rows=train_rows,
            seed=derive_seed(cfg.seed, "explain", int(instance_ids[j])),
            n_coalitions=cfg.n_coalitions, lime_samples=cfg.lime_samples,
            kernel_width=cfg.kernel_width, rule_samples=cfg.rule_samples,
            instance_index=int(instance_ids[j]),
        )

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as ex:
            return list(ex.map(one, range(len(rows))))
    return [one(j) for j in range(len(rows))]


def _attack_sets(clf, rows, labels, ids, sets, stats, non_negative, policy, expls):
    return [
        attack_instance(clf, rows[j], int(labels[j]), sets[j], stats.std, non_negative, policy,
                        expls[j] if expls is not None else None, int(ids[j]))
        for j in range(len(rows))
    ]


def run_attack(clf, test, cfg, stats, train_rows, with_baselines=True):
    """Full attack over the correctly predicted part of ``test``."""
    cfg = cfg.resolved(test.n_features)
    idx, correct = correct_subset(clf, test)
    if len(correct) == 0:
        raise AttackError("the model predicts no test instance correctly; nothing to attack")
    non_negative = np.array(test.schema.non_negative, dtype=bool)
    expls = explain_instances(clf, correct.rows, idx, cfg, stats, train_rows)
    ranks = [xai.importance_rank(e) for e in expls]

    by_k, curve = [], []
    for k in range(1, cfg.max_k + 1):
        sets = [r.top(k) for r in ranks]
        res = _attack_sets(clf, correct.rows, correct.labels, idx, sets, stats, non_negative,
                           cfg.direction_policy, expls)
        by_k.append(res)
        curve.append(asr(res))
    chosen = reverse_elbow(curve)
    objective = chosen - cfg.lambda_weight * curve[chosen - 1]
    result = AttackResult(
        AsrCurve(curve, chosen, [[list(r.top(k)) for r in ranks] for k in range(1, cfg.max_k + 1)]),
        by_k[chosen - 1], objective, expls, ranks, idx, by_k, config=cfg,
    )
    if with_baselines:
        bl_sets = [baseline_bl(r, chosen) for r in ranks]
        br_sets = [baseline_br(r, chosen, derive_seed(cfg.seed, "br", int(i))) for r, i in zip(ranks, idx)]
        for name, sets in (("BL", bl_sets), ("BR", br_sets)):
            # controls carry no explanation guidance, so both directions are tried
            res = _attack_sets(clf, correct.rows, correct.labels, idx, sets, stats, non_negative,
                               BOTH_PICK_BEST, None)
            result.baselines[name] = asr(res)
            result.baseline_examples[name] = res
    return result
