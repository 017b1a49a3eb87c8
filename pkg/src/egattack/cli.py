"""Command-line entry point.

    egattack synth   --out data.csv [--n-samples N ...] [--seed S]
    egattack prepare --config run.json --out runs/x
    egattack train   --config run.json --out runs/x
    egattack attack  --config run.json --out runs/x [--strict-gate]
    egattack report  --config run.json --out runs/x
    egattack run     --config run.json --out runs/x [--strict-gate] [--seed S]

Exit status: 0 success, 1 a model failed the reliability gate under
--strict-gate, 2 configuration / data / I-O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys

from . import pipeline
from .config import load_config
from .data import write_csv
from .errors import EgAttackError
from .synthetic import SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_GATE, EXIT_ERROR = 0, 1, 2


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "strict_gate", False):
        cfg.strict_gate = True
    if getattr(args, "jobs", None):
        cfg.n_jobs = args.jobs
    out = args.out or cfg.out_dir
    if not out:
        raise EgAttackError("no output directory: pass --out or set out_dir in the config")
    cfg.out_dir = os.path.abspath(out)
    return cfg


def _staged(fn, out, subdir):
    """Run one stage; on failure remove whatever it wrote."""
    target = os.path.join(out, subdir)
    existed = os.path.exists(target)
    try:
        return fn()
    except BaseException:
        if not existed:
            shutil.rmtree(target, ignore_errors=True)
        raise


def cmd_synth(args):
    spec = SyntheticSpec(args.n_samples, args.n_features, args.positive_ratio, args.informative,
                         args.noise, args.seed if args.seed is not None else 0)
    ds = generate_synthetic(spec)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} rows x {ds.n_features} features to {args.out}")
    return EXIT_OK


def cmd_prepare(args):
    cfg = _config(args)
    prep = _staged(lambda: pipeline.stage_prepare(cfg, cfg.out_dir), cfg.out_dir, "prepared")
    print(f"prepared: train={len(prep.train)} test={len(prep.test)} dropped={prep.dropped}")
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    prep = pipeline.load_prepared(cfg.out_dir)
    trained = _staged(lambda: pipeline.stage_train(cfg, cfg.out_dir, prep), cfg.out_dir, "models")
    for tm in trained:
        print(f"{tm.name}: test auc={pipeline._f(tm.metrics.auc)} gate={'pass' if tm.gate_passed else 'FAIL'}")
    return EXIT_OK


def cmd_attack(args):
    cfg = _config(args)
    prep = pipeline.load_prepared(cfg.out_dir)
    trained = pipeline.load_trained(cfg, cfg.out_dir)
    blocked = _staged(lambda: pipeline.stage_attack(cfg, cfg.out_dir, prep, trained), cfg.out_dir, "attacks")
    for name in blocked:
        print(f"{name}: blocked by reliability gate")
    return EXIT_GATE if blocked else EXIT_OK


def cmd_report(args):
    cfg = _config(args)
    trained = pipeline.load_trained(cfg, cfg.out_dir)
    lines, _ = _staged(lambda: pipeline.stage_report(cfg, cfg.out_dir, trained), cfg.out_dir, "reports")
    pipeline.write_manifest(cfg, cfg.out_dir)
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_run(args):
    cfg = _config(args)
    outcome = pipeline.run(cfg, cfg.out_dir)
    for line in outcome.summary:
        print(line)
    return outcome.exit_code


def build_parser():
    p = argparse.ArgumentParser(prog="egattack", description="Explanation-guided adversarial attacks on tabular classifiers")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gate=False):
        sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--out", help="run directory (overrides out_dir)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--jobs", type=int, help="worker threads for per-instance work")
        if gate:
            sp.add_argument("--strict-gate", action="store_true",
                            help="treat a test AUC below the gate as fatal for that model")

    s = sub.add_parser("synth", help="write a synthetic dataset CSV")
    defaults = SyntheticSpec()
    s.add_argument("--out", required=True)
    s.add_argument("--n-samples", type=int, default=defaults.n_samples)
    s.add_argument("--n-features", type=int, default=defaults.n_features)
    s.add_argument("--positive-ratio", type=float, default=defaults.positive_ratio)
    s.add_argument("--informative", type=int, default=defaults.n_informative)
    s.add_argument("--noise", type=float, default=defaults.noise)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    for name, fn, gate in (("prepare", cmd_prepare, False), ("train", cmd_train, False),
                           ("attack", cmd_attack, True), ("report", cmd_report, False),
                           ("run", cmd_run, True)):
        sp = sub.add_parser(name)
        common(sp, gate)
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EgAttackError as exc:
        print(f"error {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error [io] {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
