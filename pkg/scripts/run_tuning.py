"""Integrated L2 of forests for each fixed mtry versus OOB-IBS tuned mtry."""

import argparse

from lbtree.experiment import ExperimentPlan, run_experiment, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--method", default="LBRC-CIF-F", choices=("LTRC-CIF", "LBRC-CIF-C", "LBRC-CIF-F"))
    ap.add_argument("--structure", default="nonlinear")
    ap.add_argument("--family", default="wi")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--cens", type=float, default=0.2)
    ap.add_argument("--grid", default="1,2,3,6,12,24,30")
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--ntrees", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="tuning.csv")
    args = ap.parse_args()
    grid = tuple(int(v) for v in args.grid.split(","))
    plan = ExperimentPlan(
        structures=(args.structure,),
        families=(args.family,),
        ns=(args.n,),
        cens=(args.cens,),
        methods=(args.method,) + tuple(f"{args.method}@{k}" for k in grid),
        trials=args.trials,
        seed=args.seed,
        metrics=("l2",),
        n_trees=args.ntrees,
        tune_grid=grid,
        workers=args.workers,
    )
    rows = run_experiment(plan, args.out)
    for method, (mean, se, count) in summarize(rows, "l2").items():
        print(f"{method:16s} L2 {mean:.5f} (se {se:.5f}, {count} fits)")
    chosen = [r["value"] for r in rows if r["metric"] == "mtry"]
    if chosen:
        values, freq = zip(*sorted({int(v): chosen.count(v) for v in chosen}.items()))
        print("tuned mtry:", ", ".join(f"{v}x{f}" for v, f in zip(values, freq)))


if __name__ == "__main__":
    main()
