"""Median wall-clock fit times of trees and forests across sample sizes."""

import argparse
import sys

from lbtree.experiment import BENCH_COLUMNS, bench, write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--methods", default="LTRC-CIT,LBRC-CIT-F,LBRC-CIT-C,LBRC-CIF-C@6")
    ap.add_argument("--ns", default="100,200,400,800")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--ntrees", type=int, default=100)
    ap.add_argument("--out")
    args = ap.parse_args()
    rows = bench(tuple(args.methods.split(",")), tuple(int(v) for v in args.ns.split(",")),
                 reps=args.reps, n_trees=args.ntrees)
    write_rows(rows, args.out or sys.stdout, BENCH_COLUMNS)


if __name__ == "__main__":
    main()
