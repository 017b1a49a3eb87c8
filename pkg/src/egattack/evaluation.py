"""Classification metrics, probability-delta summaries and report emission."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ReportError
from .jsonio import dumps, fmt_float

REPORT_SCHEMA = "egattack-report"
REPORT_VERSION = 1
N_DELTA_BINS = 20


@dataclass(frozen=True)
class MetricsBundle:
    accuracy: float
    f1: float
    auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def auc_defined(self):
        return self.auc is not None

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "auc": self.auc,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
        }


def auc_pairwise(y_true, scores):
    """P(random positive outscores random negative), ties counted as 1/2.

    Computed from average ranks (Mann-Whitney U), which equals the explicit
    pair count.
    """
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0:
        return None
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))


def auc_trapezoid(y_true, scores):
    """Area under the ROC polyline built from distinct score thresholds."""
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tpr = np.r_[0.0, np.cumsum(y)[last] / n1]
    fpr = np.r_[0.0, np.cumsum(1 - y)[last] / n0]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def f1_from_counts(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def classification_metrics(y_true, p1_scores, threshold=0.5):
    y = np.asarray(y_true).astype(int)
    s = np.asarray(p1_scores, dtype=float)
    if len(y) == 0:
        raise ReportError("metrics need at least one prediction")
    if y.shape != s.shape:
        raise ReportError(f"{len(y)} labels but {len(s)} scores")
    if np.any((s < 0) | (s > 1)) or not np.all(np.isfinite(s)):
        raise ReportError("scores must be probabilities in [0, 1]")
    pred = (s >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    return MetricsBundle(
        accuracy=(tp + tn) / len(y),
        f1=f1_from_counts(tp, fp, fn),
        auc=auc_pairwise(y, s),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def reliability_gate(test_auc, threshold=0.75):
    """True when the model is reliable enough to trust its explanations."""
    return test_auc is not None and test_auc >= threshold


def prob_delta_summary(results):
    """Distribution of |p_before - p_after| on each instance's original class."""
    if len(results) == 0:
        raise ReportError("probability-delta summary needs at least one result")
    deltas = np.array([r.prob_delta for r in results], dtype=float)
    counts, _ = np.histogram(deltas, bins=N_DELTA_BINS, range=(0.0, 1.0))
    q1, med, q3 = np.percentile(deltas, [25, 50, 75])
    return {
        "n": len(deltas),
        "mean": float(deltas.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(deltas.min()),
        "max": float(deltas.max()),
        "histogram": {"edges": np.linspace(0.0, 1.0, N_DELTA_BINS + 1).tolist(),
                      "counts": counts.tolist()},
        "deltas": deltas.tolist(),
        "instances": [int(getattr(r, "instance_index", i)) for i, r in enumerate(results)],
    }


@dataclass
class AttackReport:
    model_kind: str
    hyperparams: dict
    explainer_kind: str
    metrics: MetricsBundle
    asr_curve: list
    chosen_k: int
    objective: float
    baselines: dict
    prob_delta: dict
    seeds: dict
    config: dict
    gate_passed: bool = True
    n_correct: int = 0
    n_test: int = 0
    immovable: int = 0

    def validate(self):
        if not self.asr_curve:
            raise ReportError("report has an empty ASR curve")
        values = [v for v in self.asr_curve] + [v for v in self.baselines.values()]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ReportError("every ASR must lie in [0, 1]")
        if not 1 <= self.chosen_k <= len(self.asr_curve):
            raise ReportError(f"chosen_k {self.chosen_k} outside [1, {len(self.asr_curve)}]")

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "model": {"kind": self.model_kind, "hyperparams": self.hyperparams},
            "explainer": self.explainer_kind,
            "reliability": {"test_auc": self.metrics.auc, "gate_passed": self.gate_passed,
                            "low_reliability": not self.gate_passed},
            "metrics": self.metrics.to_dict(),
            "attack": {
                "n_test": self.n_test,
                "n_correct": self.n_correct,
                "immovable": self.immovable,
                "asr_curve": [{"k": i + 1, "asr": v} for i, v in enumerate(self.asr_curve)],
                "chosen_k": self.chosen_k,
                "asr_at_k": self.asr_curve[self.chosen_k - 1],
                "objective": self.objective,
            },
            "baselines": {m: {"k": self.chosen_k, "asr": v} for m, v in self.baselines.items()},
            "prob_delta": {k: v for k, v in self.prob_delta.items() if k not in ("deltas", "instances")},
            "seeds": self.seeds,
            "config": self.config,
        }


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit_report(report, out_dir):
    """Write the four report files and return ``[(name, size, sha256)]``."""
    report.validate()
    try:
        os.makedirs(out_dir, exist_ok=True)
        files = {
            "report.json": dumps(report.to_dict()),
            "asr_curve.csv": "k,asr\n" + "".join(
                f"{i + 1},{fmt_float(v)}\n" for i, v in enumerate(report.asr_curve)),
            "prob_deltas.csv": "instance,delta\n" + "".join(
                f"{i},{fmt_float(v)}\n" for i, v in zip(report.prob_delta.get("instances", []),
                                                        report.prob_delta.get("deltas", []))),
            "baselines.csv": "method,k,asr\n" + f"TOPK,{report.chosen_k},{fmt_float(report.asr_curve[report.chosen_k - 1])}\n"
            + "".join(f"{m},{report.chosen_k},{fmt_float(v)}\n" for m, v in report.baselines.items()),
        }
        manifest = []
        for name, text in files.items():
            _write(os.path.join(out_dir, name), text)
            data = text.encode("utf-8")
            manifest.append((name, len(data), hashlib.sha256(data).hexdigest()))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out_dir}: {exc}") from exc
    return manifest
