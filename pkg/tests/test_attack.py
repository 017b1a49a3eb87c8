import itertools
import time

import numpy as np
import pytest

from egattack import attack as atk
from egattack import explainers as xai
from egattack.data import FeatureStats
from egattack.errors import AttackError

from conftest import FnModel, make_dataset


def threshold_model(feature, cut, d):
    return FnModel(lambda X: (X[:, feature] > cut).astype(float), d)


@pytest.mark.parametrize("values, k", [
    ([49.9, 58.4, 62.4], 2),
    ([0.499, 0.584, 0.624], 2),
    ([50.0, 40.0, 60.0], 1),
    ([10, 20, 35, 55], 4),
    ([0.3], 1),
    ([0.1, 0.3, 0.6, 0.7], 3),
    ([0.2, 0.2, 0.5], 3),
    # equal gains count as no longer accelerating
    ([10, 20, 30], 2),
])
def test_reverse_elbow(values, k):
    assert atk.reverse_elbow(values) == k


def test_reverse_elbow_fast():
    t = time.perf_counter()
    atk.reverse_elbow([49.9, 58.4, 62.4])
    assert time.perf_counter() - t < 1e-3


def test_reverse_elbow_rejects_bad_values():
    with pytest.raises(AttackError):
        atk.reverse_elbow([])
    with pytest.raises(AttackError):
        atk.reverse_elbow([0.2, -0.1])


def test_prefix_combinations():
    names = ["ndev", "nd", "nf", "la", "ld", "nuc"]
    sets = atk.prefix_combinations(list(range(6)), 3)
    assert [[names[i] for i in s] for s in sets] == [["ndev"], ["ndev", "nd"], ["ndev", "nd", "nf"]]
    assert atk.prefix_combinations([1, 0], 2 // 2) == [(1,)]
    with pytest.raises(AttackError):
        atk.prefix_combinations([0, 1], 0)


def test_negative_move_discarded():
    # nd = 1 with std 14: subtracting gives -13, so only the addition survives
    x = np.array([1.0, 3.0])
    std = np.array([14.0, 1.0])
    cands = atk.transform_instance(x, [0], std, [True, True])
    assert len(cands) == 1
    assert cands[0].row[0] == 15.0 and cands[0].directions == (1,)
    # the other feature still moves when the first one is blocked
    cands = atk.transform_instance(x, [0, 1], std, [True, True])
    rows = {tuple(c.row) for c in cands}
    assert (1.0, 2.0) in rows and all(r[0] >= 0 for r in rows)


def test_candidate_count_unconstrained():
    x = np.array([5.0, 5.0, 5.0, 5.0])
    for k in range(1, 5):
        assert len(atk.transform_instance(x, list(range(k)), np.ones(4), [False] * 4)) == 2**k


def test_immovable_instance():
    x = np.zeros(3)
    clf = FnModel(lambda X: np.full(len(X), 0.9), 3)
    expl = xai.Explanation(0, np.zeros(3), xai.RULE, rules=[
        xai.Rule(0, 1.0, xai.INCREASE, "<="), xai.Rule(1, 1.0, xai.INCREASE, "<=")])
    # prediction 1, rules say increase raises risk, so guided moves are subtractions from 0
    assert atk.transform_instance(x, [0, 1], np.ones(3), [True] * 3, atk.GUIDED, expl, 1) == []
    ex = atk.attack_instance(clf, x, 1, [0, 1], np.ones(3), [True] * 3, atk.GUIDED, expl)
    assert ex.immovable and not ex.flipped and np.array_equal(ex.perturbed, x)


def test_threshold_fixture_flips():
    clf = threshold_model(0, 5.0, 2)
    ex = atk.attack_instance(clf, np.array([4.5, 0.0]), 0, [0], np.array([1.0, 1.0]), [False, False])
    assert ex.flipped and ex.perturbed[0] == 5.5 and ex.p_after == 1.0


def test_constant_model_never_flips():
    clf = FnModel(lambda X: np.full(len(X), 0.2), 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        ex = atk.attack_instance(clf, rng.random(3), 0, [0, 1], np.ones(3), [False] * 3)
        assert not ex.flipped and ex.l0 <= 2


def test_attack_instance_picks_largest_drop():
    # p1 rises with x0 and x1; instance predicted 1, best flip lowers both
    clf = FnModel(lambda X: 1 / (1 + np.exp(-(X[:, 0] + 2 * X[:, 1] - 0.5))), 2)
    ex = atk.attack_instance(clf, np.array([0.5, 0.5]), 1, [0, 1], np.array([1.0, 1.0]), [False, False])
    assert ex.flipped and ex.directions == (-1, -1)


def test_attack_instance_rejects_misclassified():
    with pytest.raises(AttackError):
        atk.attack_instance(threshold_model(0, 5.0, 1), np.array([6.0]), 0, [0], np.ones(1), [False])


def test_guided_policy_follows_rules():
    expl = xai.Explanation(0, np.array([0.2, 0.3]), xai.RULE, rules=[
        xai.Rule(0, 1.0, xai.DECREASE, ">"), xai.Rule(1, 1.0, xai.INCREASE, "<=")])
    # predicted 0: move toward positive
    assert atk.guided_signs([0, 1], expl, 0) == [-1, 1]
    # predicted 1: move away from positive
    assert atk.guided_signs([0, 1], expl, 1) == [1, -1]
    # features without a rule fall back to the attribution sign, zero means no move
    expl2 = xai.Explanation(0, np.array([0.2, 0.0, -0.1]), xai.LIME)
    assert atk.guided_signs([0, 1, 2], expl2, 0) == [1, 0, -1]


def test_monotone_containment():
    x = np.array([0.5, 2.0, 0.1, 7.0])
    std = np.array([1.0, 1.0, 0.3, 2.0])
    nn = [True, False, True, True]
    order = [2, 0, 3, 1]
    for i in range(1, 4):
        small = {tuple(c.row[order[:i]]) for c in atk.transform_instance(x, order[:i], std, nn)}
        big = {tuple(c.row[order[:i]]) for c in atk.transform_instance(x, order[:i + 1], std, nn)}
        assert small <= big


def test_asr_arithmetic():
    mk = lambda f: atk.AdversarialExample(0, np.zeros(1), np.zeros(1), (), (), f, 0, 0, 1, 0)
    assert atk.asr([mk(True)] * 3 + [mk(False)] * 7) == pytest.approx(0.3)
    assert atk.asr([mk(False)] * 4) == 0.0
    assert atk.asr([mk(True)] * 4) == 1.0
    with pytest.raises(AttackError):
        atk.asr([])


def test_baselines():
    rank = ["a", "b", "c", "d", "e", "f"]
    assert atk.baseline_bl(rank, 2) == ("e", "f")
    assert atk.baseline_bl(rank, 1) == ("f",)
    with pytest.raises(AttackError):
        atk.baseline_bl([0, 1, 2, 3], 3)
    br = atk.baseline_br(list(range(6)), 2, seed=5)
    assert len(br) == 2 and not set(br) & {0, 1}
    assert atk.baseline_br(list(range(6)), 2, seed=5) == br
    assert set(atk.baseline_br(list(range(6)), 3, seed=1)) == {3, 4, 5}
    with pytest.raises(AttackError):
        atk.baseline_br(list(range(5)), 3, seed=0)


def test_correct_subset():
    clf = threshold_model(0, 0.5, 1)
    ds = make_dataset([[0.0], [1.0], [0.2], [0.9]], [0, 1, 1, 1])
    idx, sub = atk.correct_subset(clf, ds)
    assert list(idx) == [0, 1, 3]
    assert np.array_equal(clf.predict(sub.rows), sub.labels)
    wrong = make_dataset([[0.0], [1.0]], [1, 0])
    assert len(atk.correct_subset(clf, wrong)[1]) == 0


def test_config_resolution():
    cfg = atk.AttackConfig(explainer_kind=xai.RULE).resolved(9)
    assert cfg.max_k == 4 and cfg.direction_policy == atk.GUIDED
    assert atk.AttackConfig().resolved(2).direction_policy == atk.BOTH_PICK_BEST
    with pytest.raises(AttackError):
        atk.AttackConfig(max_k=5).resolved(9)


def _stats(ds):
    return FeatureStats(ds.schema.names, ds.rows.std(axis=0, ddof=1), ds.rows.mean(axis=0))


@pytest.mark.parametrize("kind", [xai.EXACT_SHAP, xai.LIME, xai.RULE])
def test_run_attack_invariants(kind, fitted_zoo, small_synth):
    clf = fitted_zoo["RF"]
    test = small_synth.take(np.arange(60))
    stats = _stats(small_synth)
    cfg = atk.AttackConfig(explainer_kind=kind, seed=3, n_background=20, lime_samples=200, rule_samples=200)
    res = atk.run_attack(clf, test, cfg, stats, small_synth.rows)
    assert len(res.curve.asr) == 3 and 1 <= res.curve.chosen_k <= 3
    assert res.objective == pytest.approx(res.curve.chosen_k - res.asr_at_k)
    nn = np.array(test.schema.non_negative)
    for ex in res.examples:
        diff = np.flatnonzero(ex.original != ex.perturbed)
        assert len(diff) <= res.curve.chosen_k
        assert set(diff) == set(ex.modified)
        for f in diff:
            assert abs(abs(ex.perturbed[f] - ex.original[f]) - stats.std[f]) <= 1e-9
        assert np.all(ex.perturbed[nn] >= 0)
    flips = sum(clf.predict(ex.perturbed) != clf.predict(ex.original) for ex in res.examples)
    assert res.asr_at_k == flips / len(res.correct_index)
    assert set(res.baselines) == {"BL", "BR"}


def test_run_attack_threaded_matches_serial(fitted_zoo, small_synth):
    clf = fitted_zoo["LR"]
    test = small_synth.take(np.arange(40))
    stats = _stats(small_synth)
    kw = dict(explainer_kind=xai.KERNEL_SHAP, seed=1, n_background=10, n_coalitions=40)
    a = atk.run_attack(clf, test, atk.AttackConfig(**kw), stats, small_synth.rows)
    b = atk.run_attack(clf, test, atk.AttackConfig(n_jobs=4, **kw), stats, small_synth.rows)
    assert a.curve.asr == b.curve.asr and a.baselines == b.baselines
    assert [e.to_dict() for e in a.examples] == [e.to_dict() for e in b.examples]


def test_run_attack_empty_correct_subset():
    clf = threshold_model(0, 0.5, 2)
    test = make_dataset([[0.0, 1.0], [1.0, 0.0]], [1, 0])
    stats = FeatureStats(test.schema.names, np.ones(2), np.zeros(2))
    with pytest.raises(AttackError):
        atk.run_attack(clf, test, atk.AttackConfig(), stats, test.rows)


def test_all_sign_assignments_enumerated():
    x = np.array([3.0, 3.0, 3.0])
    got = {c.directions for c in atk.transform_instance(x, [0, 1, 2], np.ones(3), [False] * 3)}
    assert got == set(itertools.product((1, -1), repeat=3))
