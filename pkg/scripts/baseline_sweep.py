"""ASR of top-k, bottom-k (BL) and random non-top (BR) feature sets at every k.

The pipeline only evaluates the baselines at the chosen k; this script fills in
the whole curve for a finished run directory.

    python scripts/baseline_sweep.py --config configs/synthetic.json --run runs/synth
"""

import argparse
import os

import numpy as np

from egattack import explainers as xai
from egattack.attack import BOTH_PICK_BEST, asr, attack_instance, baseline_bl, baseline_br, run_attack
from egattack.config import load_config
from egattack.pipeline import attack_config, cell_name, load_prepared, load_trained
from egattack.seeding import derive_seed


def sweep(clf, prep, acfg):
    res = run_attack(clf, prep.test, acfg, prep.stats, prep.train.rows, with_baselines=False)
    rows = prep.test.rows[res.correct_index]
    labels = prep.test.labels[res.correct_index]
    nn = np.array(prep.test.schema.non_negative)

    def rate(sets):
        return asr([attack_instance(clf, x, y, s, prep.stats.std, nn, BOTH_PICK_BEST, None, int(i))
                    for x, y, s, i in zip(rows, labels, sets, res.correct_index)])

    table = []
    for k in range(1, len(res.curve.asr) + 1):
        bl = rate([baseline_bl(r, k) for r in res.ranks])
        br = rate([baseline_br(r, k, derive_seed(res.config.seed, "br", int(i)))
                   for r, i in zip(res.ranks, res.correct_index)])
        table.append((k, res.curve.asr[k - 1], bl, br))
    return res.curve.chosen_k, table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--run", required=True, help="directory written by `egattack run`")
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()

    cfg = load_config(args.config)
    prep = load_prepared(args.run)
    lines = ["cell,k,topk,bl,br"]
    for tm in load_trained(cfg, args.run):
        for ename in cfg.explainers:
            kind = xai.resolve_kind(ename, prep.test.n_features)
            chosen, table = sweep(tm.clf, prep, attack_config(cfg, kind))
            cell = cell_name(tm.name, kind)
            print(f"{cell} (chosen k={chosen})")
            print("   k   top-k      BL      BR")
            for k, top, bl, br in table:
                print(f"  {k:2d}  {top:6.3f}  {bl:6.3f}  {br:6.3f}")
                lines.append(f"{cell},{k},{top!r},{bl!r},{br!r}")
    if args.csv:
        os.makedirs(os.path.dirname(os.path.abspath(args.csv)), exist_ok=True)
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
