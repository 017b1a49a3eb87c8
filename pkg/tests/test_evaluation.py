import json
import os

import numpy as np
import pytest

from egattack.attack import AdversarialExample
from egattack.errors import ReportError
from egattack.evaluation import (
    AttackReport, auc_pairwise, auc_trapezoid, classification_metrics, emit_report, f1_from_counts,
    prob_delta_summary, reliability_gate,
)


def count_pairs_auc(y, s):
    pos = [v for v, t in zip(s, y) if t == 1]
    neg = [v for v, t in zip(s, y) if t == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def ex(p_before, p_after, i=0):
    return AdversarialExample(i, np.zeros(1), np.zeros(1), (), (), False, p_before, p_after, 1, 1)


def test_auc_fixture_both_routes():
    y, s = [0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]
    assert count_pairs_auc(y, s) == 0.75
    assert abs(auc_pairwise(y, s) - 0.75) <= 1e-12
    assert abs(auc_trapezoid(y, s) - 0.75) <= 1e-12


def test_auc_routes_agree_on_random_fixtures():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = rng.integers(2, 60)
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        s = np.round(rng.random(n), 1)  # coarse grid forces ties
        assert abs(auc_pairwise(y, s) - auc_trapezoid(y, s)) <= 1e-9
        assert abs(auc_pairwise(y, s) - count_pairs_auc(y, s)) <= 1e-9


def test_perfect_and_single_class_auc():
    assert classification_metrics([0, 0, 1], [0.1, 0.2, 0.9]).auc == 1.0
    m = classification_metrics([1, 1], [0.2, 0.9])
    assert m.auc is None and not m.auc_defined


def test_f1_fixture_and_class_swap():
    assert abs(f1_from_counts(2, 1, 1) - 2 / 3) <= 1e-12
    y = np.array([1, 1, 1, 0, 0, 0, 0, 0])
    s = np.array([0.9, 0.8, 0.2, 0.7, 0.1, 0.1, 0.1, 0.1])
    a = classification_metrics(y, s)
    b = classification_metrics(1 - y, 1 - s)
    assert (a.tp, a.fp, a.fn) == (2, 1, 1) and a.f1 == pytest.approx(2 / 3)
    assert a.f1 != b.f1


def test_metrics_consistency_and_order_invariance():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 50)
    s = rng.random(50)
    m = classification_metrics(y, s)
    assert m.tp + m.fp + m.tn + m.fn == 50
    assert m.accuracy == (m.tp + m.tn) / 50
    perm = rng.permutation(50)
    assert classification_metrics(y[perm], s[perm]) == m


def test_metrics_errors():
    with pytest.raises(ReportError):
        classification_metrics([], [])
    with pytest.raises(ReportError):
        classification_metrics([0, 1], [0.5])
    with pytest.raises(ReportError):
        classification_metrics([0, 1], [0.5, 1.5])


@pytest.mark.parametrize("auc, ok", [(0.76, True), (0.75, True), (0.7499999, False), (0.60, False), (None, False)])
def test_reliability_gate(auc, ok):
    assert reliability_gate(auc) is ok


def test_prob_delta_summary():
    s = prob_delta_summary([ex(0.9, 0.3)])
    assert s["mean"] == pytest.approx(0.6)
    s = prob_delta_summary([ex(0.1, 0.3), ex(0.8, 0.4)])
    assert s["mean"] == pytest.approx(0.3) and s["median"] == pytest.approx(0.3)
    s = prob_delta_summary([ex(0.7, 0.7)] * 5)
    assert s["max"] == 0.0 and s["histogram"]["counts"][0] == 5
    assert sum(s["histogram"]["counts"]) == 5 and len(s["histogram"]["counts"]) == 20
    with pytest.raises(ReportError):
        prob_delta_summary([])


def make_report(**kw):
    base = dict(
        model_kind="RF", hyperparams={"n_estimators": 3}, explainer_kind="EXACT_SHAP",
        metrics=classification_metrics([0, 1, 1], [0.2, 0.7, 0.9]), asr_curve=[0.25, 0.5],
        chosen_k=2, objective=1.5, baselines={"BL": 0.1, "BR": 0.2},
        prob_delta=prob_delta_summary([ex(0.9, 0.3, 4), ex(0.8, 0.6, 7)]), seeds={"master": 1}, config={},
    )
    base.update(kw)
    return AttackReport(**base)


def test_emit_report_is_deterministic(tmp_path):
    m1 = emit_report(make_report(), str(tmp_path / "a"))
    m2 = emit_report(make_report(), str(tmp_path / "b"))
    assert m1 == m2
    assert [n for n, _, _ in m1] == ["report.json", "asr_curve.csv", "prob_deltas.csv", "baselines.csv"]
    for name, size, _ in m1:
        assert os.path.getsize(tmp_path / "a" / name) == size
    assert (tmp_path / "a" / "asr_curve.csv").read_text().splitlines()[0] == "k,asr"
    deltas = (tmp_path / "a" / "prob_deltas.csv").read_text().splitlines()
    assert deltas[0] == "instance,delta" and deltas[1].startswith("4,")
    lines = (tmp_path / "a" / "baselines.csv").read_text().splitlines()
    assert lines[0] == "method,k,asr" and [l.split(",")[0] for l in lines[1:]] == ["TOPK", "BL", "BR"]
    doc = json.loads((tmp_path / "a" / "report.json").read_text())
    assert doc["attack"]["asr_at_k"] == 0.5 and doc["reliability"]["low_reliability"] is False


def test_low_reliability_marker(tmp_path):
    emit_report(make_report(gate_passed=False), str(tmp_path))
    assert json.loads((tmp_path / "report.json").read_text())["reliability"]["low_reliability"] is True


def test_invalid_reports_rejected(tmp_path):
    with pytest.raises(ReportError):
        emit_report(make_report(asr_curve=[], chosen_k=1), str(tmp_path))
    with pytest.raises(ReportError):
        emit_report(make_report(asr_curve=[0.2, 1.2]), str(tmp_path))
    with pytest.raises(ReportError):
        emit_report(make_report(chosen_k=3), str(tmp_path))


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportError):
        emit_report(make_report(), str(blocker / "sub"))
