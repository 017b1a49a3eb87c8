"""Run stages: prepare -> train -> attack -> report.

Each stage reads what the previous one wrote under the run directory, so
stages can be run one at a time from the CLI or all at once with :func:`run`.

Layout::

    prepared/   train.csv test.csv stats.json prepare.json
    models/     <name>.json <name>.metrics.json
    attacks/    <name>-<explainer>/attack.json adversarial.jsonl explanations.jsonl
    reports/    <name>-<explainer>/report.json asr_curve.csv prob_deltas.csv baselines.csv
    run_manifest.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from . import data as dp
from . import explainers as xai
from .attack import AdversarialExample, AttackConfig, run_attack
from .errors import ConfigError
from .evaluation import AttackReport, MetricsBundle, classification_metrics, emit_report, prob_delta_summary
from .jsonio import dumps_line, read_json, write_json
from .models import cross_validate, grid_search, load_model, reliability_gate, save_model, train
from .synthetic import generate_synthetic

log = logging.getLogger(__name__)

MANIFEST = "run_manifest.json"


def load_dataset(cfg):
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic)
    return dp.load_csv(cfg.dataset_path, cfg.label, cfg.non_negative)


# -- prepare ------------------------------------------------------------------

def stage_prepare(cfg, out):
    seeds = cfg.seeds()
    ds = load_dataset(cfg)
    prep = dp.prepare(
        ds, dp.SplitConfig(cfg.train_fraction, seeds["split"], cfg.stratify),
        filter_threshold=cfg.filter_threshold, use_smote=cfg.smote, k_neighbors=cfg.smote_k,
        smote_seed=seeds["smote"], undersample=cfg.undersample_test, undersample_seed=seeds["undersample"],
    )
    d = os.path.join(out, "prepared")
    os.makedirs(d, exist_ok=True)
    dp.write_csv(prep.train, os.path.join(d, "train.csv"))
    dp.write_csv(prep.test, os.path.join(d, "test.csv"))
    write_json(os.path.join(d, "stats.json"), prep.stats.to_dict())
    write_json(os.path.join(d, "prepare.json"), {
        "features": list(prep.train.schema.names),
        "non_negative": list(prep.train.schema.non_negative),
        "label": prep.train.schema.label_name,
        "dropped": prep.dropped,
        "train_counts_before_smote": list(prep.train_raw_counts),
        "train_counts": list(prep.train.class_counts()),
        "test_counts": list(prep.test.class_counts()),
    })
    return prep


def load_prepared(out):
    d = os.path.join(out, "prepared")
    if not os.path.isdir(d):
        raise ConfigError(f"{d} missing; run the 'prepare' stage first")
    meta = read_json(os.path.join(d, "prepare.json"))
    policy = meta["non_negative"]
    train_ds = dp.load_csv(os.path.join(d, "train.csv"), meta["label"], policy)
    test_ds = dp.load_csv(os.path.join(d, "test.csv"), meta["label"], policy)
    stats = dp.FeatureStats.from_dict(read_json(os.path.join(d, "stats.json")))
    return dp.Prepared(train_ds, test_ds, stats, meta["dropped"], tuple(meta["train_counts_before_smote"]))


# -- train --------------------------------------------------------------------

@dataclass
class TrainedModel:
    name: str
    kind: str
    hyperparams: dict
    clf: object
    metrics: MetricsBundle
    gate_passed: bool
    cv_auc: float | None = None


def stage_train(cfg, out, prep):
    seeds = cfg.seeds()
    d = os.path.join(out, "models")
    os.makedirs(d, exist_ok=True)
    trained = []
    for spec in cfg.models:
        hp = dict(spec.hyperparams)
        cv_auc = None
        if spec.grid:
            hp, cv_auc = grid_search(spec.kind, spec.grid, prep.train, seed=seeds["cv"], folds=cfg.cv_folds,
                                     base=spec.hyperparams, n_jobs=cfg.n_jobs)
        else:
            cv_auc = cross_validate(spec.kind, hp, prep.train, folds=cfg.cv_folds, seed=seeds["cv"],
                                    n_jobs=cfg.n_jobs).mean_auc
        clf = train(spec.kind, hp, prep.train, seed=seeds["train"])
        metrics = classification_metrics(prep.test.labels, clf.positive_proba(prep.test.rows))
        passed = reliability_gate(metrics.auc, cfg.gate_threshold)
        if not passed:
            log.warning("%s: test AUC %s below gate %.2f; explanations are low-reliability",
                        spec.name, metrics.auc, cfg.gate_threshold)
        save_model(clf, os.path.join(d, f"{spec.name}.json"))
        write_json(os.path.join(d, f"{spec.name}.metrics.json"), {
            "name": spec.name, "kind": spec.kind, "hyperparams": clf.to_dict()["hyperparams"],
            "cv_mean_auc": cv_auc, "test": metrics.to_dict(),
            "gate": {"threshold": cfg.gate_threshold, "passed": passed},
        })
        trained.append(TrainedModel(spec.name, spec.kind, clf.to_dict()["hyperparams"], clf, metrics, passed, cv_auc))
    return trained


def load_trained(cfg, out):
    d = os.path.join(out, "models")
    trained = []
    for spec in cfg.models:
        path = os.path.join(d, f"{spec.name}.json")
        if not os.path.isfile(path):
            raise ConfigError(f"{path} missing; run the 'train' stage first")
        meta = read_json(os.path.join(d, f"{spec.name}.metrics.json"))
        trained.append(TrainedModel(spec.name, spec.kind, meta["hyperparams"], load_model(path),
                                    MetricsBundle(**meta["test"]), meta["gate"]["passed"], meta["cv_mean_auc"]))
    return trained


# -- attack -------------------------------------------------------------------

def attack_config(cfg, explainer_kind):
    return AttackConfig(explainer_kind=explainer_kind, seed=cfg.seeds()["attack"], n_jobs=cfg.n_jobs,
                        **cfg.attack)


def cell_name(model_name, explainer_kind):
    return f"{model_name}-{explainer_kind}"


def stage_attack(cfg, out, prep, trained):
    """Attack every (model, explainer) cell. Returns the names of gate-blocked models."""
    blocked = []
    for tm in trained:
        if not tm.gate_passed and cfg.strict_gate:
            blocked.append(tm.name)
            log.error("%s: failed the reliability gate; not attacked (strict gate)", tm.name)
            continue
        for ename in cfg.explainers:
            kind = xai.resolve_kind(ename, prep.test.n_features)
            acfg = attack_config(cfg, kind)
            res = run_attack(tm.clf, prep.test, acfg, prep.stats, prep.train.rows)
            d = os.path.join(out, "attacks", cell_name(tm.name, kind))
            os.makedirs(d, exist_ok=True)
            with open(os.path.join(d, "adversarial.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
                for ex in res.examples:
                    fh.write(dumps_line(ex.to_dict()))
            with open(os.path.join(d, "explanations.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
                for e in res.explanations:
                    fh.write(dumps_line(e.to_dict()))
            with open(os.path.join(d, "asr_curve.csv"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(res.curve.to_csv())
            write_json(os.path.join(d, "attack.json"), {
                "model": tm.name,
                "explainer": kind,
                "attack_config": {k: v for k, v in asdict(res.config).items() if k != "n_jobs"},
                "n_test": len(prep.test),
                "n_correct": len(res.correct_index),
                "asr_curve": res.curve.asr,
                "chosen_k": res.curve.chosen_k,
                "objective": res.objective,
                "baselines": res.baselines,
                "immovable": res.immovable,
            })
    return blocked


# -- report -------------------------------------------------------------------

def _example_from_dict(d):
    return AdversarialExample(
        d["instance"], np.asarray(d["original"]), np.asarray(d["perturbed"]), tuple(d["modified"]),
        tuple(d["directions"]), d["flipped"], d["p_before"], d["p_after"], d["k_used"], -1, d["immovable"],
    )


def stage_report(cfg, out, trained):
    lines, manifests = [], {}
    for tm in trained:
        for ename in cfg.explainers:
            kind = xai.resolve_kind(ename, tm.clf.n_features)
            cell = cell_name(tm.name, kind)
            adir = os.path.join(out, "attacks", cell)
            if not os.path.isdir(adir):
                continue
            att = read_json(os.path.join(adir, "attack.json"))
            with open(os.path.join(adir, "adversarial.jsonl"), encoding="utf-8") as fh:
                examples = [_example_from_dict(json.loads(line)) for line in fh if line.strip()]
            report = AttackReport(
                model_kind=tm.kind, hyperparams=tm.hyperparams, explainer_kind=kind, metrics=tm.metrics,
                asr_curve=att["asr_curve"], chosen_k=att["chosen_k"], objective=att["objective"],
                baselines=att["baselines"], prob_delta=prob_delta_summary(examples),
                seeds=cfg.seeds(), config=cfg.echo(), gate_passed=tm.gate_passed,
                n_correct=att["n_correct"], n_test=att["n_test"], immovable=att["immovable"],
            )
            manifests[cell] = emit_report(report, os.path.join(out, "reports", cell))
            k = att["chosen_k"]
            lines.append(
                f"{cell}: auc={_f(tm.metrics.auc)} gate={'pass' if tm.gate_passed else 'FAIL'} "
                f"k={k} asr={_f(att['asr_curve'][k - 1])} BL={_f(att['baselines'].get('BL'))} "
                f"BR={_f(att['baselines'].get('BR'))}"
            )
    return lines, manifests


def _f(v):
    return "n/a" if v is None else f"{v:.3f}"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def write_manifest(cfg, out):
    artifacts = {}
    for root, _, files in sorted(os.walk(out)):
        for f in sorted(files):
            if f == MANIFEST:
                continue
            p = os.path.join(root, f)
            artifacts[os.path.relpath(p, out).replace(os.sep, "/")] = _sha256(p)
    artifacts = dict(sorted(artifacts.items()))
    write_json(os.path.join(out, MANIFEST), {
        "schema": "egattack-run-manifest",
        "version": 1,
        "config": cfg.echo(),
        "seeds": cfg.seeds(),
        "artifacts": artifacts,
    })
    return artifacts


@dataclass
class RunOutcome:
    exit_code: int
    summary: list
    manifest: dict


def run(cfg, out):
    """Execute every stage into ``out``; nothing is left behind on error."""
    out = os.path.abspath(out)
    parent = os.path.dirname(out)
    os.makedirs(parent, exist_ok=True)
    if os.path.exists(out) and os.listdir(out) and not os.path.isfile(os.path.join(out, MANIFEST)):
        raise ConfigError(f"output directory {out} exists and is not a previous run; refusing to overwrite")
    tmp = tempfile.mkdtemp(prefix=".egattack-", dir=parent)
    try:
        prep = stage_prepare(cfg, tmp)
        trained = stage_train(cfg, tmp, prep)
        blocked = stage_attack(cfg, tmp, prep, trained)
        summary, _ = stage_report(cfg, tmp, trained)
        summary += [f"{name}: blocked by reliability gate" for name in blocked]
        manifest = write_manifest(cfg, tmp)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.exists(out):
        shutil.rmtree(out)
    os.replace(tmp, out)
    return RunOutcome(1 if blocked else 0, summary, manifest)
