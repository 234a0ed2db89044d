"""Conditional inference trees driven by survival influence scores.

At every node the scores are recomputed from the node's (weighted) sample,
each candidate covariate is tested for association with them through the
permutation-conditional moments of a linear statistic, and the strongest
covariate (Bonferroni-adjusted) is split at the cut that maximizes the
standardized two-sample statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from ._rng import substream
from .curves import StepCurve
from .dataset import CATEGORICAL, ORDERED, Dataset
from .estimators import AllCensoredError, Backend, EmConfig, fit_survival
from .scores import score_values

SCORES = ("ltrc", "lbrc-c", "lbrc-f")
DEFAULT_PRED = {"ltrc": Backend.LTRC_KM, "lbrc-c": Backend.MCLE, "lbrc-f": Backend.MFLE}
MAX_EXHAUSTIVE_LEVELS = 10
_EPS = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    score: str = "lbrc-f"
    pred_backend: Backend | None = None
    alpha: float = 0.05
    min_split: float = 20
    min_bucket: float = 7
    min_prob: float = 0.01
    max_depth: int | None = None
    mtry: int | None = None
    perm: int | None = None
    em: EmConfig = EmConfig()

    def __post_init__(self):
        if self.score not in SCORES:
            raise ValueError(f"score must be one of {SCORES}, got {self.score!r}")
        pred = DEFAULT_PRED[self.score] if self.pred_backend is None else Backend.parse(self.pred_backend)
        object.__setattr__(self, "pred_backend", pred)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.min_bucket > self.min_split:
            raise ValueError("min_bucket cannot exceed min_split")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def mtry_for(self, m: int) -> int:
        mtry = m if self.mtry is None else int(self.mtry)
        if not 1 <= mtry <= max(m, 1):
            raise ValueError(f"mtry={mtry} outside [1, {m}]")
        return mtry


@dataclass(frozen=True)
class SplitRule:
    """Binary split: left is ``x <= cut`` or ``x in subset``."""

    var: int
    cut: float | None = None
    subset: tuple[int, ...] | None = None

    def goes_left(self, values) -> np.ndarray:
        values = np.asarray(values)
        if self.subset is not None:
            return np.isin(values, np.asarray(self.subset, dtype=np.float64))
        return values <= self.cut


@dataclass
class Node:
    id: int
    depth: int
    members: np.ndarray
    split: SplitRule | None = None
    children: tuple[int, int] | None = None
    p_value: float = float("nan")
    flag: str | None = None

    @property
    def is_terminal(self) -> bool:
        return self.split is None


@dataclass(frozen=True, eq=False)
class LinearStatistic:
    t_vec: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    c_value: float
    df: int
    p_value: float
    centered: np.ndarray  # T - mu, computed without cancellation

    @property
    def standardized(self) -> float:
        """(T - mu) / sqrt(Sigma) for a scalar statistic."""
        if self.t_vec.size != 1:
            raise ValueError("standardized value is defined for scalar statistics only")
        s = float(self.sigma.reshape(-1)[0])
        return float(self.centered[0] / math.sqrt(s)) if s > 0 else 0.0


# ---------------------------------------------------------------------------
# Linear statistics and their permutation-conditional moments


def _score_moments(u, w):
    total = float(w.sum())
    hbar = float(np.dot(w, u) / total)
    var = float(np.dot(w, (u - hbar) ** 2) / total)
    return total, hbar, var


def _constant_scores(u, w, var) -> bool:
    return var <= _EPS * (np.dot(w, u * u) / w.sum()) + 1e-300


def linear_statistic(g, u, w=None) -> LinearStatistic:
    """T = sum_i w_i g(x_i) u_i with its conditional mean and covariance.

    ``g`` is an (n,) or (n, p) array of transformed covariate values.  The
    test statistic is the quadratic form (T - mu)' Sigma^+ (T - mu) with a
    chi-square reference on rank(Sigma) degrees of freedom.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    u = np.asarray(u, dtype=np.float64)
    w = np.ones(len(u)) if w is None else np.asarray(w, dtype=np.float64)
    if g.shape[0] != len(u) or len(w) != len(u):
        raise ValueError("dimension mismatch between g, u and w")
    total, hbar, var = _score_moments(u, w)
    sw = w @ g
    t_vec = g.T @ (w * u)
    mu = sw * hbar
    p = g.shape[1]
    if total <= 1:
        raise ValueError("effective sample size must be at least 2")
    # centred forms of total * sum w g g' - sw sw' and T - mu avoid cancellation
    gc = g - sw / total
    sigma = var * total / (total - 1.0) * ((gc.T * w) @ gc)
    diff = gc.T @ (w * (u - hbar))
    if _constant_scores(u, w, var):
        return LinearStatistic(t_vec, mu, sigma, 0.0, 0, 1.0, np.zeros(p))
    scale = max(float(np.abs(np.diag(sigma)).max()), 1e-300)
    rank = int(np.linalg.matrix_rank(sigma, tol=1e-10 * scale))
    if rank == 0:
        return LinearStatistic(t_vec, mu, sigma, 0.0, 0, 1.0, diff)
    if p == 1:
        c = float(diff[0] ** 2 / sigma[0, 0])
    else:
        c = float(diff @ np.linalg.pinv(sigma, rcond=1e-10, hermitian=True) @ diff)
    c = max(c, 0.0)
    return LinearStatistic(t_vec, mu, sigma, c, rank, float(stats.chi2.sf(c, rank)), diff)


def one_hot(codes, n_levels: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=int)
    out = np.zeros((len(codes), n_levels))
    out[np.arange(len(codes)), codes] = 1.0
    return out


def transform_covariate(ds: Dataset, j: int, idx=None) -> np.ndarray:
    """g_j: identity (numeric), level rank (ordered) or level indicators (categorical)."""
    col = ds.x[:, j] if idx is None else ds.x[idx, j]
    cov = ds.schema[j]
    if cov.kind == CATEGORICAL:
        return one_hot(col, cov.n_levels)
    return col


def _candidate_stats(x, kinds, n_levels, u, w):
    """Quadratic-form statistics and degrees of freedom for each column of x."""
    k = x.shape[1]
    cvals = np.zeros(k)
    dfs = np.zeros(k, dtype=int)
    total, hbar, var = _score_moments(u, w)
    if total <= 1 or _constant_scores(u, w, var):
        return cvals, dfs
    kscale = total * var / (total - 1.0)
    uc = u - hbar
    num = np.flatnonzero(kinds != 2)
    if len(num):
        xs = x[:, num]
        xbar = (w @ xs) / total
        xc = xs - xbar
        s2c = w @ (xc * xc)
        diff = (w * uc) @ xc
        ok = s2c > _EPS * (w @ (xs * xs)) + 1e-300
        cvals[num[ok]] = diff[ok] ** 2 / (kscale * s2c[ok])
        dfs[num[ok]] = 1
    for jj in np.flatnonzero(kinds == 2):
        codes = x[:, jj].astype(int)
        L = int(n_levels[jj])
        c = np.bincount(codes, weights=w, minlength=L)
        t = np.bincount(codes, weights=w * uc, minlength=L)
        present = c > 0
        df = int(present.sum()) - 1
        if df <= 0:
            continue
        cvals[jj] = float(np.sum(t[present] ** 2 / c[present]) / kscale)
        dfs[jj] = df
    return cvals, dfs


def _log_pvalues(cvals, dfs):
    logp = np.zeros(len(cvals))
    ok = dfs > 0
    if ok.any():
        logp[ok] = stats.chi2.logsf(cvals[ok], dfs[ok])
    return logp


def _perm_log_pvalues(x, kinds, n_levels, u, w, n_perm, rng):
    """Monte Carlo permutation p-values; integer case weights are expanded."""
    reps = np.round(w).astype(int)
    rows = np.repeat(np.arange(len(u)), reps)
    xe, ue = x[rows], u[rows]
    we = np.ones(len(rows))
    obs, dfs = _candidate_stats(xe, kinds, n_levels, ue, we)
    exceed = np.zeros(len(obs))
    for _ in range(n_perm):
        sim, _ = _candidate_stats(xe, kinds, n_levels, rng.permutation(ue), we)
        exceed += sim >= obs * (1 - 1e-12)
    p = (1.0 + exceed) / (n_perm + 1.0)
    p[dfs == 0] = 1.0
    return np.log(p)


def _kind_codes(ds: Dataset):
    kinds = np.array([2 if c.kind == CATEGORICAL else (1 if c.kind == ORDERED else 0)
                      for c in ds.schema], dtype=int)
    levels = np.array([c.n_levels for c in ds.schema], dtype=int)
    return kinds, levels


@dataclass(frozen=True)
class Selection:
    var: int
    p_raw: dict
    p_adjusted: dict
    reject: bool


def _select(candidates, logp, mtry):
    p_raw = np.exp(logp)
    p_adj = np.minimum(1.0, p_raw * mtry)
    # order by adjusted p, then raw log p (breaks Bonferroni saturation), then index
    best = min(range(len(candidates)), key=lambda k: (p_adj[k], logp[k], candidates[k]))
    return best, p_raw, p_adj


def select_variable(ds: Dataset, candidates, scores, w=None, alpha: float = 0.05,
                    mtry: int | None = None) -> Selection:
    """Pick the covariate most associated with the scores among ``candidates``."""
    candidates = sorted(int(c) for c in candidates)
    if not candidates:
        raise ValueError("candidate set is empty")
    w = np.ones(ds.n) if w is None else np.asarray(w, dtype=np.float64)
    u = np.asarray(getattr(scores, "u", scores), dtype=np.float64)
    idx = np.flatnonzero(w > 0)
    kinds, levels = _kind_codes(ds)
    cvals, dfs = _candidate_stats(ds.x[np.ix_(idx, candidates)], kinds[candidates],
                                  levels[candidates], u[idx], w[idx])
    logp = _log_pvalues(cvals, dfs)
    k, p_raw, p_adj = _select(candidates, logp, mtry or len(candidates))
    return Selection(candidates[k], dict(zip(candidates, p_raw)),
                     dict(zip(candidates, p_adj)), bool(p_adj[k] <= alpha))


# ---------------------------------------------------------------------------
# Split search


@lru_cache(maxsize=None)
def _subset_masks(k: int) -> np.ndarray:
    """All proper subsets of k levels that contain level 0, as 0/1 rows."""
    rows = []
    for bits in range(1, 2 ** k - 1):
        if bits & 1:
            rows.append([(bits >> i) & 1 for i in range(k)])
    return np.array(rows, dtype=np.float64).reshape(-1, k)


def _two_sample_stats(wl, tl, total, var):
    """|T - mu| / sqrt(Sigma) for membership indicators with left weight wl."""
    denom = var * wl * (total - wl) / (total - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.abs(tl) / np.sqrt(denom)
    return np.where(denom > 0, s, 0.0)


def _admissible(wl, total, min_left):
    return (wl >= min_left) & (total - wl >= min_left)


def _best_numeric(x, u, w, total, hbar, var, min_left):
    order = np.argsort(x, kind="stable")
    xs, ws, us = x[order], w[order], u[order]
    breaks = np.flatnonzero(xs[1:] > xs[:-1])
    if len(breaks) == 0:
        return None
    wl = np.cumsum(ws)[breaks]
    tl = np.cumsum(ws * (us - hbar))[breaks]
    s = _two_sample_stats(wl, tl, total, var)
    ok = _admissible(wl, total, min_left)
    if not ok.any():
        return None
    s = np.where(ok, s, -1.0)
    k = int(np.argmax(s))
    return 0.5 * (xs[breaks[k]] + xs[breaks[k] + 1]), float(s[k])


def _best_categorical(codes, n_levels, u, w, total, hbar, var, min_left):
    codes = codes.astype(int)
    c = np.bincount(codes, weights=w, minlength=n_levels)
    t = np.bincount(codes, weights=w * (u - hbar), minlength=n_levels)
    present = np.flatnonzero(c > 0)
    if len(present) < 2:
        return None
    if len(present) <= MAX_EXHAUSTIVE_LEVELS:
        masks = _subset_masks(len(present))
        wl = masks @ c[present]
        tl = masks @ t[present]
        s = _two_sample_stats(wl, tl, total, var)
        ok = _admissible(wl, total, min_left)
        if not ok.any():
            return None
        s = np.where(ok, s, -1.0)
        k = int(np.argmax(s))
        left = present[masks[k] > 0]
        left_weight = wl[k]
    else:
        # order levels by mean score and scan them as an ordered covariate
        means = t[present] / c[present]
        lv = present[np.argsort(means, kind="stable")]
        wl = np.cumsum(c[lv])[:-1]
        tl = np.cumsum(t[lv])[:-1]
        s = _two_sample_stats(wl, tl, total, var)
        ok = _admissible(wl, total, min_left)
        if not ok.any():
            return None
        s = np.where(ok, s, -1.0)
        k = int(np.argmax(s))
        left = lv[: k + 1]
        left_weight = wl[k]
    absent = np.setdiff1d(np.arange(n_levels), present)
    if left_weight >= total - left_weight:
        left = np.concatenate((left, absent))
    return tuple(sorted(int(v) for v in left)), float(s[k])


def _split_on(x, kind, n_levels, u, w, min_left, var_index):
    total, hbar, var = _score_moments(u, w)
    if total <= 1:
        return None
    if kind == 2:
        found = _best_categorical(x, n_levels, u, w, total, hbar, var, min_left)
        return None if found is None else SplitRule(var_index, subset=found[0])
    found = _best_numeric(x, u, w, total, hbar, var, min_left)
    return None if found is None else SplitRule(var_index, cut=float(found[0]))


def best_split(ds: Dataset, var: int, scores, config: TreeConfig | None = None,
               w=None, root_weight: float | None = None) -> SplitRule | None:
    """Best admissible binary split of covariate ``var`` (None if there is none)."""
    config = config or TreeConfig()
    w = np.ones(ds.n) if w is None else np.asarray(w, dtype=np.float64)
    u = np.asarray(getattr(scores, "u", scores), dtype=np.float64)
    idx = np.flatnonzero(w > 0)
    root_weight = float(w.sum()) if root_weight is None else root_weight
    min_left = max(config.min_bucket, config.min_prob * root_weight)
    kinds, levels = _kind_codes(ds)
    return _split_on(ds.x[idx, var], kinds[var], levels[var], u[idx], w[idx], min_left, var)


# ---------------------------------------------------------------------------
# Growing and predicting


@dataclass(eq=False)
class TreeModel:
    nodes: list
    config: TreeConfig
    data: Dataset
    _curves: dict = field(default_factory=dict, repr=False)

    @property
    def terminals(self) -> list:
        return [nd for nd in self.nodes if nd.is_terminal]

    @property
    def n_splits(self) -> int:
        return sum(1 for nd in self.nodes if not nd.is_terminal)

    def apply(self, X) -> np.ndarray:
        """Terminal node id for each row of the encoded covariate matrix X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(len(X), dtype=int)
        stack = [(0, np.arange(len(X)))]
        while stack:
            nid, rows = stack.pop()
            node = self.nodes[nid]
            if node.is_terminal or len(rows) == 0:
                out[rows] = nid
                continue
            left = node.split.goes_left(X[rows, node.split.var])
            stack.append((node.children[0], rows[left]))
            stack.append((node.children[1], rows[~left]))
        return out

    def terminal_curve(self, nid: int) -> StepCurve:
        curve = self._curves.get(nid)
        if curve is None:
            node = self.nodes[nid]
            ds = self.data
            m = node.members
            backend = self.config.pred_backend
            if node.flag == "all_censored":
                backend = Backend.MCLE
            curve = fit_survival(backend, ds.a[m], ds.z[m], ds.delta[m], None, self.config.em)
            self._curves[nid] = curve
        return curve

    def predict(self, x) -> StepCurve:
        return self.terminal_curve(int(self.apply(np.asarray(x)[None, :])[0]))

    def predict_many(self, X) -> list:
        return [self.terminal_curve(int(nid)) for nid in self.apply(X)]


class _Grower:
    def __init__(self, ds: Dataset, cfg: TreeConfig, rng, root_weight: float):
        self.ds = ds
        self.cfg = cfg
        self.rng = rng
        self.kinds, self.levels = _kind_codes(ds)
        self.mtry = cfg.mtry_for(ds.m) if ds.m else 0
        self.min_left = max(cfg.min_bucket, cfg.min_prob * root_weight)
        self.nodes: list[Node] = []

    def grow(self, idx, w, depth):
        node = Node(len(self.nodes), depth, idx)
        self.nodes.append(node)
        wn = w[idx]
        total = float(wn.sum())
        cfg = self.cfg
        if (self.mtry == 0 or total < cfg.min_split or total < 2 * self.min_left
                or (cfg.max_depth is not None and depth >= cfg.max_depth)):
            return node
        ds = self.ds
        try:
            u = score_values(cfg.score, ds.a[idx], ds.z[idx], ds.delta[idx], wn, cfg.em)
        except AllCensoredError:
            node.flag = "all_censored"
            return node
        cand = np.sort(self.rng.choice(ds.m, size=self.mtry, replace=False))
        x = ds.x[np.ix_(idx, cand)]
        if cfg.perm:
            logp = _perm_log_pvalues(x, self.kinds[cand], self.levels[cand], u, wn,
                                     cfg.perm, self.rng)
        else:
            cvals, dfs = _candidate_stats(x, self.kinds[cand], self.levels[cand], u, wn)
            if not np.any(dfs > 0):
                node.p_value = 1.0
                return node
            logp = _log_pvalues(cvals, dfs)
        k, _, p_adj = _select(list(cand), logp, self.mtry)
        node.p_value = float(p_adj[k])
        if p_adj[k] > cfg.alpha:
            return node
        j = int(cand[k])
        rule = _split_on(x[:, k], self.kinds[j], self.levels[j], u, wn, self.min_left, j)
        if rule is None:
            return node
        left = rule.goes_left(ds.x[idx, j])
        node.split = rule
        lnode = self.grow(idx[left], w, depth + 1)
        rnode = self.grow(idx[~left], w, depth + 1)
        node.children = (lnode.id, rnode.id)
        return node


def grow_tree(ds: Dataset, w=None, config: TreeConfig | None = None, seed: int = 0,
              rng: np.random.Generator | None = None) -> TreeModel:
    """Grow a conditional inference tree (depth-first, deterministic given seed)."""
    config = config or TreeConfig()
    w = np.ones(ds.n) if w is None else np.asarray(w, dtype=np.float64)
    if rng is None:
        rng = substream(seed, "mtry")
    grower = _Grower(ds, config, rng, float(w.sum()))
    grower.grow(np.flatnonzero(w > 0), w, 0)
    return TreeModel(grower.nodes, config, ds)


def predict_tree(model: TreeModel, x) -> StepCurve:
    return model.predict(x)

