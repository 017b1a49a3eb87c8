"""Run configuration: one JSON document drives a whole run."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from . import explainers as xai
from .errors import ConfigError, EgAttackError
from .models import MODEL_KINDS
from .seeding import derive_seed
from .synthetic import SyntheticSpec

_TOP_KEYS = {"seed", "dataset", "split", "filter", "smote", "undersample_test", "models", "cv",
             "explainers", "attack", "gate", "n_jobs", "out_dir"}
_ATTACK_KEYS = {"max_k", "lambda_weight", "direction_policy", "n_background", "n_coalitions",
                "lime_samples", "kernel_width", "rule_samples"}


@dataclass
class ModelSpec:
    kind: str
    name: str
    hyperparams: dict = field(default_factory=dict)
    grid: dict | None = None


@dataclass
class RunConfig:
    seed: int
    dataset_path: str | None = None
    label: str = "label"
    non_negative: object = "infer-all-true"
    synthetic: SyntheticSpec | None = None
    train_fraction: float = 0.9
    stratify: bool = False
    filter_threshold: float | None = 0.7
    smote: bool = True
    smote_k: int = 5
    undersample_test: bool = False
    cv_folds: int = 10
    models: list = field(default_factory=list)
    explainers: list = field(default_factory=lambda: ["SHAP"])
    attack: dict = field(default_factory=dict)
    gate_threshold: float = 0.75
    strict_gate: bool = False
    n_jobs: int = 1
    out_dir: str | None = None

    def seeds(self):
        """Every stage seed, derived from the master seed."""
        return {
            "master": self.seed,
            "split": derive_seed(self.seed, "split"),
            "smote": derive_seed(self.seed, "smote"),
            "undersample": derive_seed(self.seed, "undersample"),
            "cv": derive_seed(self.seed, "cv"),
            "train": derive_seed(self.seed, "train"),
            "attack": derive_seed(self.seed, "attack"),
        }

    def echo(self):
        """Config as written to reports. Scheduling and output location are left out."""
        d = {
            "seed": self.seed,
            "dataset": {"path": self.dataset_path, "label": self.label, "non_negative": self.non_negative,
                        "synthetic": None if self.synthetic is None else asdict(self.synthetic)},
            "split": {"train_fraction": self.train_fraction, "stratify": self.stratify},
            "filter": {"threshold": self.filter_threshold},
            "smote": {"enabled": self.smote, "k_neighbors": self.smote_k},
            "undersample_test": self.undersample_test,
            "models": [{"kind": m.kind, "name": m.name, "hyperparams": m.hyperparams, "grid": m.grid}
                       for m in self.models],
            "cv": {"folds": self.cv_folds},
            "explainers": list(self.explainers),
            "attack": dict(self.attack),
            "gate": {"threshold": self.gate_threshold, "strict": self.strict_gate},
        }
        return d


def _need(cond, field_name, msg):
    if not cond:
        raise ConfigError(f"{field_name}: {msg}")


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_config(raw, base_dir="."):
    """Validate a config mapping. A run manifest (with a ``config`` key) is accepted too."""
    if isinstance(raw, dict) and "config" in raw and "artifacts" in raw:
        raw = raw["config"]
    _need(isinstance(raw, dict), "config", "must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    _need(not unknown, "config", f"unknown field(s) {sorted(unknown)}")
    _need("seed" in raw, "seed", "a master seed is required")
    _need(_int(raw["seed"]) and raw["seed"] >= 0, "seed", "must be a non-negative integer")
    cfg = RunConfig(seed=raw["seed"])

    ds = raw.get("dataset")
    _need(isinstance(ds, dict), "dataset", "must be an object")
    _need(set(ds) <= {"path", "label", "non_negative", "synthetic"}, "dataset",
          f"unknown field(s) {sorted(set(ds) - {'path', 'label', 'non_negative', 'synthetic'})}")
    if ds.get("synthetic") is not None:
        try:
            cfg.synthetic = SyntheticSpec(**ds["synthetic"])
            cfg.synthetic.validate()
        except TypeError as exc:
            raise ConfigError(f"dataset.synthetic: {exc}") from None
        except EgAttackError as exc:
            raise ConfigError(f"dataset.synthetic: {exc.args[0]}") from None
    if ds.get("path") is not None:
        path = ds["path"]
        if not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        _need(os.path.isfile(path), "dataset.path", f"file not found: {path}")
        cfg.dataset_path = path
    _need((cfg.dataset_path is None) != (cfg.synthetic is None), "dataset",
          "exactly one of 'path' or 'synthetic' is required")
    cfg.label = ds.get("label", "label")
    cfg.non_negative = ds.get("non_negative", "infer-all-true")

    sp = raw.get("split", {})
    cfg.train_fraction = sp.get("train_fraction", 0.9)
    _need(_num(cfg.train_fraction) and 0 < cfg.train_fraction < 1, "split.train_fraction", "must lie in (0, 1)")
    cfg.stratify = bool(sp.get("stratify", False))

    flt = raw.get("filter", {"threshold": 0.7})
    cfg.filter_threshold = None if flt is None else flt.get("threshold", 0.7)
    if cfg.filter_threshold is not None:
        _need(_num(cfg.filter_threshold) and 0 < cfg.filter_threshold <= 1, "filter.threshold", "must lie in (0, 1]")

    sm = raw.get("smote", {})
    cfg.smote = bool(sm.get("enabled", True))
    cfg.smote_k = sm.get("k_neighbors", 5)
    _need(_int(cfg.smote_k) and cfg.smote_k >= 1, "smote.k_neighbors", "must be a positive integer")
    cfg.undersample_test = bool(raw.get("undersample_test", False))

    cfg.cv_folds = raw.get("cv", {}).get("folds", 10)
    _need(_int(cfg.cv_folds) and cfg.cv_folds >= 2, "cv.folds", "must be an integer >= 2")

    models = raw.get("models")
    _need(isinstance(models, list) and models, "models", "must be a non-empty list")
    names = set()
    for i, m in enumerate(models):
        where = f"models[{i}]"
        _need(isinstance(m, dict) and "kind" in m, where, "needs a 'kind'")
        _need(m["kind"] in MODEL_KINDS, f"{where}.kind", f"unknown model kind {m['kind']!r}; "
              f"expected one of {sorted(MODEL_KINDS)}")
        _need(set(m) <= {"kind", "name", "hyperparams", "grid"}, where, "unknown field(s)")
        name = m.get("name", m["kind"])
        _need(name not in names, f"{where}.name", f"duplicate model name {name!r}")
        names.add(name)
        grid = m.get("grid")
        _need(grid is None or (isinstance(grid, dict) and all(isinstance(v, list) and v for v in grid.values())),
              f"{where}.grid", "must map hyperparameter names to non-empty lists")
        cfg.models.append(ModelSpec(m["kind"], name, dict(m.get("hyperparams", {})), grid))

    expl = raw.get("explainers", ["SHAP"])
    _need(isinstance(expl, list) and expl, "explainers", "must be a non-empty list")
    for i, e in enumerate(expl):
        try:
            xai.resolve_kind(e, 1)
        except EgAttackError:
            raise ConfigError(f"explainers[{i}]: unknown explainer {e!r}; expected one of "
                              f"{list(xai.EXPLAINER_KINDS) + ['SHAP']}") from None
    cfg.explainers = list(expl)

    att = dict(raw.get("attack", {}))
    unknown = set(att) - _ATTACK_KEYS
    _need(not unknown, "attack", f"unknown field(s) {sorted(unknown)}")
    cfg.attack = att

    gate = raw.get("gate", {})
    cfg.gate_threshold = gate.get("threshold", 0.75)
    _need(_num(cfg.gate_threshold) and 0 <= cfg.gate_threshold <= 1, "gate.threshold", "must lie in [0, 1]")
    cfg.strict_gate = bool(gate.get("strict", False))

    cfg.n_jobs = raw.get("n_jobs", 1)
    _need(_int(cfg.n_jobs) and cfg.n_jobs >= 1, "n_jobs", "must be a positive integer")
    out = raw.get("out_dir")
    if out is not None and not os.path.isabs(out):
        out = os.path.normpath(os.path.join(base_dir, out))
    cfg.out_dir = out
    return cfg


def load_config(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))
