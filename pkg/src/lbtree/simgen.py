"""Simulation of length-biased right-censored samples with known truth.

Unbiased failure times T~ are drawn from a covariate-dependent family, onset
delays A~ ~ U(0, tau), and only pairs with T~ > A~ are kept. Censoring
C ~ Exp(rate) runs from enrollment, so Z = min(T, A + C).

Covariate layouts
-----------------
``triplet``: 30 covariates in repeating (categorical{1..6}, binary{0,1},
Uniform(0,1)) triplets; X1, X2, X3 drive the truth.
``null6``: X1, X2 ~ U(0,1), X3, X4 categorical{1..6}, X5, X6 binary; the
failure time does not depend on them.

Categorical covariates are stored by level index, so level ``k`` has code
``k - 1``; binary covariates are numeric 0/1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from ._rng import substream
from .dataset import CATEGORICAL, NUMERIC, Covariate, Dataset

STRUCTURES = ("tree", "linear", "nonlinear", "null")
FAMILIES = ("wd", "wi", "lgn", "bat", "exp")
LAYOUTS = ("triplet", "null6")

# per-leaf parameters of the tree structure
TREE_LEAVES = {
    "wd": [(0.9, 7.0), (0.9, 3.0), (0.9, 2.5), (0.9, 1.0)],
    "wi": [(2.0, 2.0), (2.0, 3.5), (2.0, 6.0), (2.0, 10.0)],
    "lgn": [(2.0, 0.3), (1.8, 0.2), (1.2, 0.3), (0.5, 0.5)],
    "bat": [(0.01, 1.0, 5.0), (0.06, 1.0, 5.0), (0.20, 1.0, 5.0), (0.70, 1.0, 5.0)],
    "exp": [(1.0, 1.0)] * 4,
}
# single distribution used when the response ignores covariates
NULL_PARAMS = {
    "wi": (2.0, 2.0),
    "wd": (0.9, 2.0),
    "lgn": (1.4, 0.4),
    "bat": (0.2, 1.0, 5.0),
    "exp": (1.0, 1.0),
}
# Weibull shapes and (phi0, phi1, phi2, phi3) for the regression structures
REGRESSION_SHAPE = {"wd": 0.8, "wi": 2.0}
PHI = {
    ("linear", "wd"): (-math.log(1.0), 1.0, 1.0, -1.0 / 3.0),
    ("linear", "wi"): (-math.log(2.0), 1.0, 1.0, -1.0 / 3.0),
    ("nonlinear", "wd"): (-math.log(5.0), 1.0, 1.0, 1.0 / 6.0),
    ("nonlinear", "wi"): (-math.log(10.0), 1.0, 1.0, 1.0 / 6.0),
}

_TAIL = 1e-6
_TAU_FACTOR = 1.5
_MIN_ACCEPT = 1e-6


class SimulationError(RuntimeError):
    pass


def _family_kind(family: str) -> str:
    return {"wd": "weibull", "wi": "weibull", "exp": "weibull", "lgn": "lognormal",
            "bat": "hjorth"}[family]


# ---------------------------------------------------------------------------
# Distribution primitives (vectorized over parameter arrays)


def hjorth_survival(t, a, b, c):
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-0.5 * a * t * t) / (1.0 + c * t) ** (b / c)


def _hjorth_density(t, a, b, c):
    return hjorth_survival(t, a, b, c) * (a * t + b / (1.0 + c * t))


def hjorth_quantile(u, a, b, c, tol=1e-10):
    """Solve S(t) = u by bisection (S is strictly decreasing)."""
    u, a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (u, a, b, c)))
    lo = np.zeros(u.shape)
    hi = np.sqrt(-2.0 * np.log(np.clip(u, 1e-300, 1.0)) / a) + 1e-12
    while True:
        mid = 0.5 * (lo + hi)
        below = hjorth_survival(mid, a, b, c) > u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol):
            return 0.5 * (lo + hi)


def _survival(kind, t, params):
    t = np.asarray(t, dtype=np.float64)
    if kind == "weibull":
        k, beta = params
        return np.exp(-np.power(np.maximum(t, 0.0) / beta, k))
    if kind == "lognormal":
        mu, sigma = params
        with np.errstate(divide="ignore"):
            return stats.norm.sf((np.log(t) - mu) / sigma)
    return hjorth_survival(t, *params)


def _density(kind, t, params):
    t = np.asarray(t, dtype=np.float64)
    if kind == "weibull":
        k, beta = params
        r = np.maximum(t, 1e-300) / beta
        return k / beta * r ** (k - 1) * np.exp(-r ** k)
    if kind == "lognormal":
        mu, sigma = params
        return stats.lognorm.pdf(t, s=sigma, scale=np.exp(mu))
    return _hjorth_density(t, *params)


def _sample(kind, params, rng):
    n = len(np.broadcast_arrays(*params)[0])
    if kind == "weibull":
        k, beta = params
        return beta * rng.standard_exponential(n) ** (1.0 / k)
    if kind == "lognormal":
        mu, sigma = params
        return np.exp(mu + sigma * rng.standard_normal(n))
    return hjorth_quantile(rng.uniform(size=n), *params)


def _quantile(kind, prob, params):
    if kind == "weibull":
        k, beta = params
        return beta * (-math.log1p(-prob)) ** (1.0 / k)
    if kind == "lognormal":
        mu, sigma = params
        return math.exp(mu + sigma * stats.norm.ppf(prob))
    return float(hjorth_quantile(1.0 - prob, *params))


def _mean(kind, params):
    if kind == "weibull":
        k, beta = params
        return beta * special.gamma(1.0 + 1.0 / k)
    if kind == "lognormal":
        mu, sigma = params
        return np.exp(mu + 0.5 * sigma ** 2)
    a, b, c = (np.asarray(p, dtype=np.float64) for p in params)
    out = [integrate.quad(lambda t: float(hjorth_survival(t, ai, bi, ci)), 0, np.inf)[0]
           for ai, bi, ci in zip(*np.broadcast_arrays(a, b, c))]
    return np.array(out)


# ---------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class ScenarioSpec:
    structure: str = "tree"
    family: str = "wd"
    n: int = 200
    cens: float = 0.2
    layout: str | None = None
    seed: int = 0
    tau: float | None = None

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.structure in ("linear", "nonlinear") and self.family not in REGRESSION_SHAPE:
            raise ValueError(f"{self.structure} structure supports families wd and wi only")
        layout = self.layout or ("null6" if self.structure == "null" else "triplet")
        if layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}")
        object.__setattr__(self, "layout", layout)
        if not 0 <= self.cens <= 0.9:
            raise ValueError("censoring rate must lie in [0, 0.9]")

    @property
    def m(self) -> int:
        return 30 if self.layout == "triplet" else 6

    @property
    def schema(self) -> tuple[Covariate, ...]:
        cat = tuple(str(k) for k in range(1, 7))
        if self.layout == "triplet":
            out = []
            for j in range(10):
                out += [Covariate(f"X{3 * j + 1}", CATEGORICAL, cat),
                        Covariate(f"X{3 * j + 2}", NUMERIC),
                        Covariate(f"X{3 * j + 3}", NUMERIC)]
            return tuple(out)
        return (Covariate("X1"), Covariate("X2"), Covariate("X3", CATEGORICAL, cat),
                Covariate("X4", CATEGORICAL, cat), Covariate("X5"), Covariate("X6"))

    def draw_covariates(self, n: int, rng) -> np.ndarray:
        x = np.empty((n, self.m))
        if self.layout == "triplet":
            for j in range(10):
                x[:, 3 * j] = rng.integers(0, 6, n)
                x[:, 3 * j + 1] = rng.integers(0, 2, n)
                x[:, 3 * j + 2] = rng.uniform(size=n)
        else:
            x[:, 0:2] = rng.uniform(size=(n, 2))
            x[:, 2:4] = rng.integers(0, 6, (n, 2))
            x[:, 4:6] = rng.integers(0, 2, (n, 2))
        return x


def leaf_id(X) -> np.ndarray:
    """Leaf (0..3) of the four-leaf tree structure for triplet-layout rows."""
    X = np.atleast_2d(X)
    x1 = X[:, 0] + 1.0
    low = x1 <= 3
    return np.where(low, np.where(X[:, 1] <= 0, 0, 1), np.where(X[:, 2] <= 0.5, 2, 3))


def location(structure: str, family: str, X) -> np.ndarray:
    """Location parameter theta of the linear / nonlinear structures."""
    X = np.atleast_2d(X)
    x1, x2, x3 = X[:, 0] + 1.0, X[:, 1], X[:, 2]
    phi0, phi1, phi2, phi3 = PHI[(structure, family)]
    if structure == "linear":
        return phi0 + phi1 * x1 + phi2 * x2 + phi3 * x3
    s = x1 + x2
    return phi0 + phi1 * np.cos(np.pi * s) + phi2 * np.sqrt(s) + phi3 * np.power(x3, x2)


@dataclass(frozen=True, eq=False)
class TrueModel:
    """Analytic S(t|x), f(t|x) and mean for a scenario."""

    spec: ScenarioSpec

    @property
    def kind(self) -> str:
        return _family_kind(self.spec.family)

    def params(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        s = self.spec
        n = len(X)
        if s.structure == "null":
            return tuple(np.full(n, v) for v in NULL_PARAMS[s.family])
        if s.structure == "tree":
            table = np.array(TREE_LEAVES[s.family], dtype=np.float64)
            rows = table[leaf_id(X)]
            return tuple(rows[:, k] for k in range(rows.shape[1]))
        theta = location(s.structure, s.family, X)
        return np.full(n, REGRESSION_SHAPE[s.family]), np.exp(-theta)

    def survival(self, t, X):
        """(n, k) matrix S(t|x); t is a shared grid (k,) or per-row (n, k)."""
        params = tuple(p[:, None] for p in self.params(X))
        t = np.asarray(t, dtype=np.float64)
        if t.ndim <= 1:
            t = np.atleast_1d(t)[None, :]
        return _survival(self.kind, t, params)

    def survival_row(self, t, x):
        return self.survival(np.atleast_1d(t), np.asarray(x)[None, :])[0]

    def density(self, t, X):
        params = tuple(p[:, None] for p in self.params(X))
        return _density(self.kind, np.atleast_2d(t), params)

    def mean(self, X):
        return np.asarray(_mean(self.kind, self.params(X)), dtype=np.float64)

    def sample(self, X, rng) -> np.ndarray:
        return _sample(self.kind, self.params(X), rng)

    def extreme_quantile(self, prob: float = 1.0 - _TAIL) -> float:
        """Largest ``prob``-quantile across the scenario's covariate conditions."""
        s = self.spec
        if s.structure == "null":
            return _quantile(self.kind, prob, NULL_PARAMS[s.family])
        if s.structure == "tree":
            return max(_quantile(self.kind, prob, p) for p in TREE_LEAVES[s.family])
        grid = np.array([[x1 - 1, x2, x3] + [0.0] * (s.m - 3)
                         for x1 in range(1, 7) for x2 in (0, 1) for x3 in (0.0, 0.5, 1.0)])
        k, beta = self.params(grid)
        return max(_quantile("weibull", prob, (float(k[0]), float(b))) for b in beta)


def default_tau(spec: ScenarioSpec) -> float:
    return _TAU_FACTOR * TrueModel(spec).extreme_quantile()


def tau_of(spec: ScenarioSpec) -> float:
    return spec.tau if spec.tau is not None else default_tau(spec)


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True, eq=False)
class LatentTruth:
    t_unbiased: np.ndarray
    a: np.ndarray
    c_latent: np.ndarray
    leaf_id: np.ndarray
    n_drawn: int

    def to_csv(self, path, truth: TrueModel | None = None, x=None, grid_points: int = 0) -> None:
        cols = ["t_unbiased", "c_latent", "leaf_id"]
        grid = None
        if grid_points and truth is not None and x is not None:
            grid = np.linspace(0.0, float(np.max(self.t_unbiased)), grid_points)
            cols += [f"S_{k}" for k in range(grid_points)]
            surv = truth.survival(np.broadcast_to(grid, (len(x), grid_points)), x)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if grid is not None:
                w.writerow(["#grid"] + [repr(float(g)) for g in grid])
            w.writerow(cols)
            for i in range(len(self.t_unbiased)):
                row = [repr(float(self.t_unbiased[i])), repr(float(self.c_latent[i])),
                       int(self.leaf_id[i])]
                if grid is not None:
                    row += [repr(float(v)) for v in surv[i]]
                w.writerow(row)


def _draw_truncated(spec: ScenarioSpec, n: int, rng, tau: float):
    """Covariates, T~ and A~ for n accepted draws (T~ > A~)."""
    truth = TrueModel(spec)
    xs, ts, as_ = [], [], []
    have = 0
    drawn = 0
    batch = max(1024, 4 * n)
    while have < n:
        x = spec.draw_covariates(batch, rng)
        t = truth.sample(x, rng)
        a = rng.uniform(0.0, tau, batch)
        keep = t > a
        k = int(keep.sum())
        if have + k >= n:
            # count draws only up to the n-th acceptance
            drawn += int(np.flatnonzero(keep)[n - have - 1]) + 1
        else:
            drawn += batch
        if k:
            xs.append(x[keep])
            ts.append(t[keep])
            as_.append(a[keep])
            have += k
        elif drawn >= 10.0 / _MIN_ACCEPT:
            raise SimulationError("acceptance probability below 1e-6; tau is misconfigured")
        rate = max(have / drawn, 1.0 / drawn)
        batch = int(min(max(1024, 1.2 * (n - have) / rate), 2_000_000))
    x = np.concatenate(xs)[:n]
    t = np.concatenate(ts)[:n]
    a = np.concatenate(as_)[:n]
    return x, t, a, drawn


CALIBRATION_SEED = 20240601


@lru_cache(maxsize=256)
def _calibrate(structure, family, layout, tau, target, seed, pilot):
    spec = ScenarioSpec(structure, family, 1, 0.0, layout, seed, tau)
    rng = substream(seed, "calibration")
    _, t, a, _ = _draw_truncated(spec, pilot, rng, tau)
    v = t - a
    e = rng.standard_exponential(pilot)

    def censored_fraction(rate):
        return float(np.mean(v > e / rate))

    lo, hi = -30.0, 30.0  # log-rate bracket
    if censored_fraction(math.exp(hi)) < target - 0.01:
        raise SimulationError(f"censoring rate {target} unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if censored_fraction(math.exp(mid)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return math.exp(0.5 * (lo + hi))


def calibrate_censoring(spec: ScenarioSpec, target: float | None = None,
                        seed: int = CALIBRATION_SEED, pilot: int = 100_000) -> float:
    """Exponential censoring rate giving censoring proportion ``target``.

    Bisection on a fixed pilot sample (common random numbers), so the result
    is deterministic in ``seed``. A zero target returns rate 0 (no censoring).
    """
    target = spec.cens if target is None else target
    if not 0 <= target <= 0.9:
        raise ValueError("target censoring proportion must lie in [0, 0.9]")
    if target == 0:
        return 0.0
    return _calibrate(spec.structure, spec.family, spec.layout, tau_of(spec),
                      float(target), int(seed), int(pilot))


def sample_lbrc(spec: ScenarioSpec, rng: np.random.Generator | None = None,
                rate: float | None = None) -> tuple[Dataset, LatentTruth]:
    """Length-biased right-censored sample plus the latent quantities behind it."""
    tau = tau_of(spec)
    rate = calibrate_censoring(spec) if rate is None else rate
    rng = substream(spec.seed, "simulate") if rng is None else rng
    x, t, a, drawn = _draw_truncated(spec, spec.n, rng, tau)
    if rate > 0:
        c = rng.standard_exponential(spec.n) / rate
    else:
        c = np.full(spec.n, np.inf)
    v = t - a
    delta = (v <= c).astype(np.int64)
    z = a + np.minimum(v, c)
    ds = Dataset(a, z, delta, x, spec.schema)
    leaves = leaf_id(x) if spec.structure == "tree" else np.full(spec.n, -1)
    return ds, LatentTruth(t, a, c, leaves, drawn)


def sample_unbiased(spec: ScenarioSpec, n: int | None = None, rng=None):
    """Test set without length bias or censoring: covariates and T~."""
    n = spec.n if n is None else n
    rng = substream(spec.seed, "testset") if rng is None else rng
    x = spec.draw_covariates(n, rng)
    return x, TrueModel(spec).sample(x, rng)


# ---------------------------------------------------------------------------
# Tree recovery


X3_CUT_TOLERANCE = 0.1


def recovery_check(model) -> bool:
    """True iff the tree is exactly the generating four-leaf partition."""
    nodes = model.nodes
    if len(model.terminals) != 4 or model.n_splits != 3:
        return False
    root = nodes[0]
    if root.is_terminal or root.split.var != 0 or root.split.subset is None:
        return False
    left_levels = set(root.split.subset) & set(range(6))
    if left_levels == {0, 1, 2}:
        low, high = root.children
    elif left_levels == {3, 4, 5}:
        high, low = root.children
    else:
        return False
    low_node, high_node = nodes[low], nodes[high]
    if low_node.is_terminal or high_node.is_terminal:
        return False
    s2, s3 = low_node.split, high_node.split
    if s2.var != 1 or s2.cut is None or not 0.0 <= s2.cut < 1.0:
        return False
    if s3.var != 2 or s3.cut is None or abs(s3.cut - 0.5) > X3_CUT_TOLERANCE:
        return False
    return all(nodes[c].is_terminal for c in (*low_node.children, *high_node.children))


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    return replace(spec, seed=seed)
