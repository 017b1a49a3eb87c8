"""Print the probability-delta distribution of every report in a run directory."""

import argparse
import json
import os


def bar_chart(counts, edges, width=40):
    top = max(counts) or 1
    for c, lo, hi in zip(counts, edges, edges[1:]):
        print(f"  [{lo:.2f}, {hi:.2f})  {'#' * round(width * c / top):<{width}} {c}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run", help="directory written by `egattack run`")
    args = ap.parse_args()

    root = os.path.join(args.run, "reports")
    for cell in sorted(os.listdir(root)):
        with open(os.path.join(root, cell, "report.json"), encoding="utf-8") as fh:
            rep = json.load(fh)
        pd = rep["prob_delta"]
        print(f"{cell}: n={pd['n']} mean={pd['mean']:.3f} median={pd['median']:.3f} "
              f"iqr=[{pd['q1']:.3f}, {pd['q3']:.3f}] k={rep['attack']['chosen_k']}")
        bar_chart(pd["histogram"]["counts"], pd["histogram"]["edges"])


if __name__ == "__main__":
    main()
