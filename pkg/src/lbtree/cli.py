"""Command-line interface: ``lbtree <command> [options]``.

Options may also come from a JSON file given with ``--config``; explicit
flags win. Exit codes: 0 success, 2 invalid input, 3 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .cif import ForestConfig, grow_forest, tune_mtry
from .cit import SCORES, TreeConfig, grow_tree
from .dataset import DatasetError, load_csv, save_csv, save_schema
from .estimators import Backend, EmConfig, EstimatorError
from .experiment import BENCH_COLUMNS, ExperimentPlan, bench, run_experiment, write_rows
from .metrics import MetricError, ibs_trace, integrated_l2, stationarity_curves
from .scores import score_values
from .serialize import ModelFormatError, check_schema, load_model, save_model
from .simgen import FAMILIES, STRUCTURES, ScenarioSpec, TrueModel, sample_lbrc, sample_unbiased

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

BACKEND_SCORES = {"ltrc": "ltrc", "mcle": "lbrc-c", "mfle": "lbrc-f"}

DEFAULTS = {
    "seed": 0,
    "score": "lbrc-f",
    "predict": None,
    "alpha": None,
    "minsplit": None,
    "minbucket": None,
    "minprob": 0.01,
    "maxdepth": None,
    "perm": None,
    "em_tol": 1e-8,
    "em_max_iter": 1000,
    "method": "cit",
    "ntrees": 100,
    "mtry": None,
    "tune_grid": None,
    "structure": "tree",
    "family": "wd",
    "n": 200,
    "cens": 0.2,
    "truth_grid": 0,
    "metric": "ibs",
    "test_size": None,
    "trials": 10,
    "structures": "tree",
    "families": "wd",
    "ns": "200",
    "censs": "0.2",
    "methods": "LTRC-CIT,LBRC-CIT-FF",
    "metrics": "l2,recovery",
    "workers": 1,
    "reps": 3,
    "bench_ns": "100,200,400,800",
    "bench_methods": "LBRC-CIT-FF",
}


class CliError(ValueError):
    pass


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _common(p, *, data=False, em=False, seed=True):
    p.add_argument("--config", help="JSON file with option values")
    if seed:
        p.add_argument("--seed", type=int)
    if data:
        p.add_argument("--data", required=False, help="CSV with entry,time,status,covariates")
        p.add_argument("--schema", required=False, help="covariate schema JSON")
    if em:
        p.add_argument("--em-tol", type=float)
        p.add_argument("--em-max-iter", type=int)


def _tree_options(p):
    p.add_argument("--score", choices=SCORES)
    p.add_argument("--predict", choices=("ltrc", "mcle", "mfle"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--minsplit", type=float)
    p.add_argument("--minbucket", type=float)
    p.add_argument("--minprob", type=float)
    p.add_argument("--maxdepth", type=int)
    p.add_argument("--perm", type=int, help="Monte Carlo permutations (default: asymptotic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lbtree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a length-biased right-censored sample")
    _common(p)
    p.add_argument("--structure", choices=STRUCTURES)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--cens", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out")
    p.add_argument("--truth-out")
    p.add_argument("--truth-grid", type=int, help="grid points of analytic S in the truth file")

    p = sub.add_parser("fit", help="fit a tree or forest and save it as JSON")
    _common(p, data=True, em=True)
    _tree_options(p)
    p.add_argument("--method", choices=("cit", "cif"))
    p.add_argument("--ntrees", type=int)
    p.add_argument("--mtry", help="integer or 'tune'")
    p.add_argument("--tune-grid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("tune", help="out-of-bag IBS for each mtry candidate (CSV)")
    _common(p, data=True, em=True)
    _tree_options(p)
    p.add_argument("--ntrees", type=int)
    p.add_argument("--tune-grid")
    p.add_argument("--out")

    p = sub.add_parser("predict", help="predicted survival curves (CSV)")
    _common(p, data=True, seed=False)
    p.add_argument("--model", required=True)
    p.add_argument("--times", help="comma-separated times; default: each curve's jump points")
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="IBS, integrated L2 or stationarity curves")
    _common(p, data=True)
    p.add_argument("--metric", choices=("ibs", "l2", "stationarity"))
    p.add_argument("--model")
    p.add_argument("--structure", choices=STRUCTURES)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--cens", type=float)
    p.add_argument("--test-size", type=int)
    p.add_argument("--trace-out")

    p = sub.add_parser("scores", help="per-subject influence scores (CSV)")
    _common(p, data=True, em=True, seed=False)
    p.add_argument("--score", choices=SCORES)
    p.add_argument("--backend", choices=tuple(BACKEND_SCORES),
                   help="estimator behind the score (overrides --score)")
    p.add_argument("--out")

    p = sub.add_parser("experiment", help="simulation experiment, tidy CSV output")
    _common(p, em=True)
    p.add_argument("--structures")
    p.add_argument("--families")
    p.add_argument("--ns")
    p.add_argument("--censs", help="comma-separated censoring rates")
    p.add_argument("--methods")
    p.add_argument("--metrics")
    p.add_argument("--trials", type=int)
    p.add_argument("--ntrees", type=int)
    p.add_argument("--tune-grid")
    p.add_argument("--alpha", type=float)
    p.add_argument("--test-size", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="median fit times (CSV)")
    _common(p, em=True)
    p.add_argument("--bench-methods")
    p.add_argument("--bench-ns")
    p.add_argument("--reps", type=int)
    p.add_argument("--ntrees", type=int)
    p.add_argument("--out")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise CliError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in cfg.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    return opts


def _em(o) -> EmConfig:
    return EmConfig(tol=float(o["em_tol"]), max_iter=int(o["em_max_iter"]))


def _load(o):
    if not o.get("data") or not o.get("schema"):
        raise CliError("--data and --schema are required")
    return load_csv(o["data"], o["schema"])


def _tree_config(o) -> TreeConfig:
    return TreeConfig(
        score=o["score"],
        pred_backend=o["predict"],
        alpha=0.05 if o["alpha"] is None else o["alpha"],
        min_split=20 if o["minsplit"] is None else o["minsplit"],
        min_bucket=7 if o["minbucket"] is None else o["minbucket"],
        min_prob=o["minprob"],
        max_depth=o["maxdepth"],
        perm=o["perm"],
        em=_em(o),
    )


def _forest_config(o, mtry=None) -> ForestConfig:
    return ForestConfig(
        n_trees=int(o["ntrees"]),
        score=o["score"],
        pred_backend=None if o["predict"] is None else Backend.parse(o["predict"]),
        mtry=mtry,
        min_split=o["minsplit"],
        min_bucket=o["minbucket"],
        min_prob=o["minprob"],
        alpha=1.0 if o["alpha"] is None else o["alpha"],
        max_depth=o["maxdepth"],
        em=_em(o),
        seed=int(o["seed"]),
    )


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_simulate(o):
    spec = ScenarioSpec(o["structure"], o["family"], int(o["n"]), float(o["cens"]), seed=int(o["seed"]))
    ds, latent = sample_lbrc(spec)
    schema_out = o.get("schema_out") or o["out"].rsplit(".", 1)[0] + ".schema.json"
    save_csv(ds, o["out"])
    save_schema(ds.schema, schema_out)
    if o.get("truth_out"):
        latent.to_csv(o["truth_out"], TrueModel(spec), ds.x, int(o["truth_grid"]))


def cmd_fit(o):
    ds = _load(o)
    if o["method"] == "cit":
        model = grow_tree(ds, None, _tree_config(o), seed=int(o["seed"]))
    else:
        mtry = o["mtry"]
        if mtry is None or str(mtry) == "tune":
            grid = None if o["tune_grid"] is None else _int_list(o["tune_grid"])
            if mtry is None and grid is None:
                model = grow_forest(ds, _forest_config(o))
            else:
                model = tune_mtry(ds, _forest_config(o), grid).forest
        else:
            model = grow_forest(ds, _forest_config(o, int(mtry)))
    save_model(model, o["out"])


def cmd_tune(o):
    ds = _load(o)
    grid = None if o["tune_grid"] is None else _int_list(o["tune_grid"])
    res = tune_mtry(ds, _forest_config(o), grid, keep_forest=False)
    fh = _open_out(o.get("out"))
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mtry", "ibs", "uncovered", "selected"])
        for m, v in res.ibs.items():
            w.writerow([m, repr(v), res.uncovered[m], int(m == res.mtry)])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_predict(o):
    model = load_model(o["model"])
    ds = _load(o)
    check_schema(model, ds)
    curves = model.predict_many(ds.x)
    times = None if o.get("times") is None else np.asarray(_float_list(o["times"]))
    fh = _open_out(o.get("out"))
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "t", "survival"])
        for i, c in enumerate(curves):
            ts = np.concatenate(([0.0], c.times)) if times is None else times
            for t, v in zip(ts, np.atleast_1d(c(ts))):
                w.writerow([i, repr(float(t)), repr(float(v))])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_evaluate(o):
    metric = o["metric"]
    if metric == "stationarity":
        ds = _load(o)
        s_a, s_v = stationarity_curves(ds)
        grid = np.union1d(s_a.times, s_v.times)
        fh = _open_out(o.get("trace_out"))
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "km_backward", "km_forward"])
            for t in grid:
                w.writerow([repr(float(t)), repr(float(s_a(t))), repr(float(s_v(t)))])
        finally:
            if fh is not sys.stdout:
                fh.close()
        return
    if not o.get("model"):
        raise CliError("--model is required")
    model = load_model(o["model"])
    if metric == "ibs":
        ds = _load(o)
        check_schema(model, ds)
        value, trace = ibs_trace(ds, model.predict_many(ds.x))
        print(repr(value))
        if o.get("trace_out"):
            with open(o["trace_out"], "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t", "brier"])
                for t, s in zip(trace.times, trace.scores):
                    w.writerow([repr(float(t)), repr(float(s))])
        return
    # integrated L2 against the analytic truth of a simulation scenario
    spec = ScenarioSpec(o["structure"], o["family"], model.data.n, float(o["cens"]), seed=int(o["seed"]))
    if tuple(spec.schema) != tuple(model.data.schema):
        raise CliError("model schema does not match the scenario's covariate layout")
    x_test, t_test = sample_unbiased(spec, o["test_size"] or model.data.n)
    preds = model.predict_many(x_test)
    truth = TrueModel(spec)
    print(repr(integrated_l2(truth, preds, x_test, t_test=t_test)))
    if o.get("trace_out"):
        with open(o["trace_out"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "l2"])
            for i, p in enumerate(preds):
                w.writerow([i, repr(integrated_l2(truth, [p], x_test[i:i + 1], t_test=t_test))])


def cmd_scores(o):
    ds = _load(o)
    score = BACKEND_SCORES[o["backend"]] if o.get("backend") else o["score"]
    u = score_values(score, ds.a, ds.z, ds.delta, None, _em(o))
    fh = _open_out(o.get("out"))
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "score"])
        for i, v in enumerate(u):
            w.writerow([i, repr(float(v))])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_experiment(o):
    plan = ExperimentPlan(
        structures=tuple(_str_list(o["structures"])),
        families=tuple(_str_list(o["families"])),
        ns=tuple(_int_list(o["ns"])),
        cens=tuple(_float_list(o["censs"])),
        methods=tuple(_str_list(o["methods"])),
        metrics=tuple(_str_list(o["metrics"])),
        trials=int(o["trials"]),
        seed=int(o["seed"]),
        n_test=o["test_size"],
        n_trees=int(o["ntrees"]),
        tune_grid=None if o["tune_grid"] is None else tuple(_int_list(o["tune_grid"])),
        alpha=0.05 if o["alpha"] is None else o["alpha"],
        em=_em(o),
        workers=int(o["workers"]),
    )
    rows = run_experiment(plan)
    fh = _open_out(o.get("out"))
    try:
        write_rows(rows, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_bench(o):
    rows = bench(_str_list(o["bench_methods"]), _int_list(o["bench_ns"]), int(o["reps"]),
                 int(o["seed"]), int(o["ntrees"]), em=_em(o))
    fh = _open_out(o.get("out"))
    try:
        write_rows(rows, fh, BENCH_COLUMNS)
    finally:
        if fh is not sys.stdout:
            fh.close()


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "tune": cmd_tune,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "scores": cmd_scores,
    "experiment": cmd_experiment,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        COMMANDS[args.command](resolve(args))
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (EstimatorError, MetricError, FloatingPointError, ArithmeticError) as exc:
        print(f"lbtree: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DatasetError, ModelFormatError, CliError, ValueError, OSError, KeyError) as exc:
        print(f"lbtree: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"lbtree: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
