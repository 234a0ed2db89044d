"""Root-node selection frequencies and rejection rate on covariate-free responses."""

import argparse

import numpy as np
from scipy import stats

from lbtree.cit import select_variable
from lbtree.scores import score_values
from lbtree.simgen import ScenarioSpec, sample_lbrc


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--cens", type=float, default=0.2)
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    scores = ("ltrc", "lbrc-c", "lbrc-f")
    counts = {s: np.zeros(6, int) for s in scores}
    rejected = dict.fromkeys(scores, 0)
    for k in range(args.trials):
        ds, _ = sample_lbrc(ScenarioSpec("null", "wi", args.n, args.cens, seed=args.seed + k))
        for s in scores:
            sel = select_variable(ds, range(ds.m), score_values(s, ds.a, ds.z, ds.delta), alpha=args.alpha)
            counts[s][sel.var] += 1
            rejected[s] += sel.reject
    print("score    " + " ".join(f"{c.name:>6s}" for c in ScenarioSpec("null").schema) + "  chi2-p  reject")
    for s in scores:
        p = stats.chisquare(counts[s]).pvalue
        row = " ".join(f"{v:6d}" for v in counts[s])
        print(f"{s:8s} {row}  {p:6.3f}  {rejected[s] / args.trials:.4f}")


if __name__ == "__main__":
    main()
