"""Tree-structure recovery rates of LTRC-CIT and LBRC-CIT on the four-leaf scenario."""

import argparse

from lbtree.experiment import ExperimentPlan, run_experiment, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--families", default="wd,wi,lgn,bat")
    ap.add_argument("--ns", default="100,200,400")
    ap.add_argument("--cens", default="0.2,0.5")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="recovery.csv")
    args = ap.parse_args()
    plan = ExperimentPlan(
        structures=("tree",),
        families=tuple(args.families.split(",")),
        ns=tuple(int(v) for v in args.ns.split(",")),
        cens=tuple(float(v) for v in args.cens.split(",")),
        methods=("LTRC-CIT", "LBRC-CIT-F", "LBRC-CIT-C"),
        trials=args.trials,
        seed=args.seed,
        metrics=("recovery",),
        workers=args.workers,
    )
    rows = run_experiment(plan, args.out)
    for method, (mean, se, count) in sorted(summarize(rows, "recovery").items()):
        print(f"{method:12s} recovery {mean:.3f} (se {se:.3f}, {count} fits)")


if __name__ == "__main__":
    main()
