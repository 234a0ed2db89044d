"""Simulation experiments and timing benchmarks.

Method codes
------------
One-sample estimators: ``L1`` (LTRC Kaplan-Meier), ``F1`` (MFLE), ``C1`` (MCLE).
Trees: ``LTRC-CIT`` and ``LBRC-CIT-XY`` where X is the score backend used for
splitting and Y the prediction backend (F = MFLE, C = MCLE), e.g.
``LBRC-CIT-FF``; ``LBRC-CIT-F`` and ``LBRC-CIT-C`` abbreviate FF and CC.
Forests: ``LTRC-CIF``, ``LBRC-CIF-C``, ``LBRC-CIF-F``; mtry is tuned by OOB
IBS unless a fixed value is appended as ``@k`` (``LBRC-CIF-F@6``).
"""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product

from ._rng import substream
from .cif import ForestConfig, default_grid, grow_forest, tune_mtry
from .cit import TreeConfig, grow_tree
from .estimators import Backend, EmConfig, fit_survival
from .metrics import integrated_l2
from .simgen import ScenarioSpec, TrueModel, recovery_check, sample_lbrc, sample_unbiased

COLUMNS = ("trial", "method", "structure", "family", "n", "cens", "metric", "value", "status")
_LETTER = {"F": ("lbrc-f", Backend.MFLE), "C": ("lbrc-c", Backend.MCLE)}


@dataclass(frozen=True)
class Method:
    code: str
    kind: str  # "onesample" | "tree" | "forest"
    score: str | None
    pred: Backend
    mtry: int | None = None  # forests: None means tuned


def parse_method(code: str) -> Method:
    base, _, suffix = code.partition("@")
    mtry = int(suffix) if suffix else None
    onesample = {"L1": Backend.LTRC_KM, "F1": Backend.MFLE, "C1": Backend.MCLE}
    if base in onesample and not suffix:
        return Method(code, "onesample", None, onesample[base])
    if base == "LTRC-CIT" and not suffix:
        return Method(code, "tree", "ltrc", Backend.LTRC_KM)
    if base.startswith("LBRC-CIT-") and not suffix:
        letters = base[len("LBRC-CIT-"):]
        if len(letters) == 1:
            letters *= 2
        if len(letters) == 2 and set(letters) <= set(_LETTER):
            return Method(code, "tree", _LETTER[letters[0]][0], _LETTER[letters[1]][1])
    if base == "LTRC-CIF":
        return Method(code, "forest", "ltrc", Backend.LTRC_KM, mtry)
    if base in ("LBRC-CIF-F", "LBRC-CIF-C"):
        score, pred = _LETTER[base[-1]]
        return Method(code, "forest", score, pred, mtry)
    raise ValueError(f"unknown method code {code!r}")


@dataclass(frozen=True)
class ExperimentPlan:
    structures: tuple = ("tree",)
    families: tuple = ("wd",)
    ns: tuple = (200,)
    cens: tuple = (0.2,)
    methods: tuple = ("LTRC-CIT", "LBRC-CIT-FF")
    trials: int = 10
    seed: int = 0
    metrics: tuple = ("l2", "recovery")
    n_test: int | None = None
    n_trees: int = 100
    tune_grid: tuple | None = None
    alpha: float = 0.05
    em: EmConfig = EmConfig()
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        for code in self.methods:
            parse_method(code)

    @property
    def scenarios(self) -> list:
        return list(product(self.structures, self.families, self.ns, self.cens))


def trial_seed(plan_seed: int, scenario_index: int, trial: int) -> int:
    return int(substream(plan_seed, "trial", scenario_index, trial).integers(0, 2 ** 63 - 1))


class _TrialFits:
    """Per-trial cache so tuned and fixed-mtry forests share their growth."""

    def __init__(self, ds, plan: ExperimentPlan, seed: int):
        self.ds = ds
        self.plan = plan
        self.seed = seed
        self.forests = {}
        self.tuned = {}

    def forest_config(self, method: Method) -> ForestConfig:
        return ForestConfig(n_trees=self.plan.n_trees, score=method.score,
                            pred_backend=method.pred, em=self.plan.em,
                            seed=int(substream(self.seed, "forest").integers(0, 2 ** 63 - 1)))

    def forest(self, method: Method):
        key = (method.score, method.pred)
        cfg = self.forest_config(method)
        if method.mtry is None:
            if key not in self.tuned:
                grid = self.plan.tune_grid or default_grid(self.ds.m)
                res = tune_mtry(self.ds, cfg, grid, keep_forest=True)
                self.tuned[key] = res
                self.forests[(key, res.mtry)] = res.forest
            return self.tuned[key].forest, self.tuned[key].mtry
        fk = (key, method.mtry)
        if fk not in self.forests:
            self.forests[fk] = grow_forest(self.ds, replace(cfg, mtry=method.mtry))
        return self.forests[fk], method.mtry


def fit_method(method: Method, ds, plan: ExperimentPlan, seed: int, cache=None):
    """Fitted object exposing ``predict_many(X)``; plus extra metric rows."""
    if method.kind == "onesample":
        curve = fit_survival(method.pred, ds.a, ds.z, ds.delta, None, plan.em)
        return _Constant(curve), {}
    if method.kind == "tree":
        cfg = TreeConfig(score=method.score, pred_backend=method.pred, alpha=plan.alpha, em=plan.em)
        return grow_tree(ds, None, cfg, seed=int(substream(seed, "tree").integers(0, 2 ** 63 - 1))), {}
    cache = cache or _TrialFits(ds, plan, seed)
    forest, mtry = cache.forest(method)
    return forest, ({"mtry": float(mtry)} if method.mtry is None else {})


class _Constant:
    def __init__(self, curve):
        self.curve = curve

    def predict_many(self, X):
        return [self.curve] * len(X)


def run_trial(plan: ExperimentPlan, scenario_index: int, trial: int) -> list:
    structure, family, n, cens = plan.scenarios[scenario_index]
    seed = trial_seed(plan.seed, scenario_index, trial)
    base = dict(trial=trial, structure=structure, family=family, n=n, cens=cens)
    rows = []
    try:
        spec = ScenarioSpec(structure, family, n, cens, seed=seed)
        ds, _ = sample_lbrc(spec)
        need_l2 = "l2" in plan.metrics
        if need_l2:
            x_test, t_test = sample_unbiased(spec, plan.n_test or n)
            truth = TrueModel(spec)
    except Exception as exc:  # noqa: BLE001 - recorded, never aborts the sweep
        return [dict(base, method=m, metric="error", value=float("nan"),
                     status=f"{type(exc).__name__}: {exc}") for m in plan.methods]
    cache = _TrialFits(ds, plan, seed)
    for code in plan.methods:
        method = parse_method(code)
        try:
            model, extra = fit_method(method, ds, plan, seed, cache)
            if need_l2:
                preds = model.predict_many(x_test)
                rows.append(dict(base, method=code, metric="l2",
                                 value=integrated_l2(truth, preds, x_test, t_test=t_test), status="ok"))
            if "recovery" in plan.metrics and method.kind == "tree" and structure == "tree":
                rows.append(dict(base, method=code, metric="recovery",
                                 value=float(recovery_check(model)), status="ok"))
            for k, v in extra.items():
                rows.append(dict(base, method=code, metric=k, value=v, status="ok"))
        except Exception as exc:  # noqa: BLE001
            rows.append(dict(base, method=code, metric="error", value=float("nan"),
                             status=f"{type(exc).__name__}: {exc}"))
    return rows


def _run_job(args):
    return run_trial(*args)


def run_experiment(plan: ExperimentPlan, out=None) -> list:
    """Run every (scenario, trial); rows come back in (scenario, trial) order.

    ``out`` may be a path or text stream receiving the tidy CSV.
    """
    jobs = [(plan, s, t) for s in range(len(plan.scenarios)) for t in range(plan.trials)]
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            chunks = list(pool.map(_run_job, jobs))
    else:
        chunks = [_run_job(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    if out is not None:
        write_rows(rows, out)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(rows, out, columns=COLUMNS) -> None:
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            write_rows(rows, fh, columns)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    write_rows(rows, buf, columns)
    return buf.getvalue()


def summarize(rows, metric: str = "l2") -> dict:
    """Mean and standard error of ``metric`` per method."""
    by = {}
    for r in rows:
        if r["metric"] == metric and r["status"] == "ok":
            by.setdefault(r["method"], []).append(r["value"])
    out = {}
    for k, v in by.items():
        sd = statistics.stdev(v) if len(v) > 1 else 0.0
        out[k] = (statistics.fmean(v), sd / math.sqrt(len(v)), len(v))
    return out


# ---------------------------------------------------------------------------
# Timing

BENCH_COLUMNS = ("method", "n", "reps", "median_seconds", "min_seconds")


def bench(methods=("LBRC-CIT-FF",), ns=(100, 200, 400, 800), reps: int = 3, seed: int = 0,
          n_trees: int = 100, structure: str = "nonlinear", family: str = "wi",
          cens: float = 0.2, em: EmConfig = EmConfig()) -> list:
    """Median wall-clock fit time per (method, n) on a simulated m=30 sample."""
    out = []
    for n in ns:
        ds, _ = sample_lbrc(ScenarioSpec(structure, family, n, cens, seed=seed))
        for code in methods:
            method = parse_method(code)
            plan = ExperimentPlan(methods=(code,), n_trees=n_trees, em=em, trials=1)
            fit_method(method, ds, plan, seed)  # warm-up (JIT compilation, caches)
            times = []
            for r in range(reps):
                t0 = time.perf_counter()
                fit_method(method, ds, plan, seed + r)
                times.append(time.perf_counter() - t0)
            out.append(dict(method=code, n=n, reps=reps, median_seconds=statistics.median(times),
                            min_seconds=min(times)))
    return out
