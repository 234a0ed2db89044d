"""Integrated L2 error of one-sample estimators, trees and forests on simulated scenarios."""

import argparse

from lbtree.experiment import ExperimentPlan, run_experiment, summarize

TREES = ("L1", "F1", "C1", "LTRC-CIT", "LBRC-CIT-FF", "LBRC-CIT-FC", "LBRC-CIT-CF", "LBRC-CIT-CC")
FORESTS = ("LTRC-CIF", "LBRC-CIF-C", "LBRC-CIF-F")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--structures", default="tree,linear,nonlinear")
    ap.add_argument("--families", default="wd,wi")
    ap.add_argument("--ns", default="100,200,400")
    ap.add_argument("--cens", default="0.2,0.5")
    ap.add_argument("--forests", action="store_true", help="add tuned forests (slow)")
    ap.add_argument("--ntrees", type=int, default=100)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="prediction.csv")
    args = ap.parse_args()
    plan = ExperimentPlan(
        structures=tuple(args.structures.split(",")),
        families=tuple(args.families.split(",")),
        ns=tuple(int(v) for v in args.ns.split(",")),
        cens=tuple(float(v) for v in args.cens.split(",")),
        methods=TREES + (FORESTS if args.forests else ()),
        trials=args.trials,
        seed=args.seed,
        metrics=("l2",),
        n_trees=args.ntrees,
        workers=args.workers,
    )
    rows = run_experiment(plan, args.out)
    for method, (mean, se, count) in sorted(summarize(rows, "l2").items(), key=lambda kv: kv[1][0]):
        print(f"{method:12s} L2 {mean:.5f} (se {se:.5f}, {count} fits)")


if __name__ == "__main__":
    main()
