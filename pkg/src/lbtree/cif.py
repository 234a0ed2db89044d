"""Bootstrap forests of conditional inference trees.

Each tree is grown with its bootstrap multiplicities as case weights. A new
covariate vector x gets nearest-neighbour weights

    alpha_i(x) = (1/B) sum_b  w_bi I(i in N_b(x)) / sum_k w_bk I(k in N_b(x))

where N_b(x) is x's terminal node in tree b, and the survival prediction is
the weighted one-sample estimator over the whole training sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import substream
from .cit import TreeConfig, TreeModel, grow_tree
from .curves import StepCurve
from .dataset import Dataset
from .estimators import Backend, EmConfig, fit_survival


class NoOobCoverage(ValueError):
    """Subject is in-bag for every tree."""


def default_mtry(m: int) -> int:
    return max(1, math.ceil(math.sqrt(m)))


def default_grid(m: int) -> list[int]:
    cand = {1, default_mtry(m), math.ceil(m / 4), math.ceil(m / 2), math.ceil(3 * m / 4), m}
    return sorted(c for c in cand if 1 <= c <= m)


@dataclass(frozen=True)
class ForestConfig:
    """Forest settings; ``None`` sizes resolve against the training data."""

    n_trees: int = 100
    score: str = "lbrc-c"
    pred_backend: Backend | None = None
    mtry: int | None = None
    min_split: float | None = None
    min_bucket: float | None = None
    min_prob: float = 0.01
    alpha: float = 1.0
    max_depth: int | None = None
    em: EmConfig = EmConfig()
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("a forest needs at least one tree")

    def tree_config(self, n: int, m: int) -> TreeConfig:
        root = math.ceil(math.sqrt(n))
        return TreeConfig(
            score=self.score,
            pred_backend=self.pred_backend,
            alpha=self.alpha,
            min_split=self.min_split if self.min_split is not None else max(20, root),
            min_bucket=self.min_bucket if self.min_bucket is not None else max(7, root),
            min_prob=self.min_prob,
            max_depth=self.max_depth,
            mtry=self.mtry if self.mtry is not None else default_mtry(m),
            em=self.em,
        )


@dataclass(eq=False)
class ForestModel:
    trees: list
    inbag: np.ndarray  # (B, n) bootstrap multiplicities
    config: ForestConfig
    tree_config: TreeConfig
    data: Dataset
    _node_weights: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.inbag = np.asarray(self.inbag, dtype=np.float64)
        if not self._node_weights:
            self._node_weights = [_normalized_members(t, w) for t, w in zip(self.trees, self.inbag)]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def pred_backend(self) -> Backend:
        return self.tree_config.pred_backend

    def leaves(self, X) -> np.ndarray:
        """(len(X), B) terminal node ids."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([t.apply(X) for t in self.trees])

    def weight_matrix(self, X, oob_rows=None) -> np.ndarray:
        """Forest weights for each row of X; row r sums to 1 or is all zero.

        With ``oob_rows`` (training indices aligned with X), tree b only
        contributes to row r when subject ``oob_rows[r]`` is out of bag for b.
        """
        leaves = self.leaves(X)
        n = self.data.n
        out = np.zeros((len(leaves), n))
        used = np.zeros(len(leaves))
        for b in range(self.n_trees):
            table = self._node_weights[b]
            rows = np.arange(len(leaves))
            if oob_rows is not None:
                rows = rows[self.inbag[b, oob_rows] == 0]
            for r in rows:
                members, weights = table[int(leaves[r, b])]
                out[r, members] += weights
            used[rows] += 1
        nz = used > 0
        out[nz] /= used[nz, None]
        return out

    def predict_weights(self, w) -> StepCurve:
        ds = self.data
        return fit_survival(self.pred_backend, ds.a, ds.z, ds.delta, w, self.config.em)

    def predict(self, x) -> StepCurve:
        return self.predict_weights(forest_weights(self, x))

    def predict_many(self, X) -> list:
        return [self.predict_weights(w) for w in self.weight_matrix(X)]


def _normalized_members(tree: TreeModel, w) -> dict:
    out = {}
    for node in tree.terminals:
        m = node.members
        out[node.id] = (m, w[m] / w[m].sum())
    return out


def bootstrap_counts(n: int, seed: int, b: int) -> np.ndarray:
    """In-bag multiplicities of tree b: a size-n resample with replacement."""
    return substream(seed, "bootstrap", b).multinomial(n, np.full(n, 1.0 / n)).astype(np.float64)


def grow_forest(ds: Dataset, config: ForestConfig | None = None, inbag=None) -> ForestModel:
    """Grow ``config.n_trees`` trees; tree b depends only on (seed, b).

    ``inbag`` overrides the bootstrap draws with a given (B, n) weight matrix.
    """
    config = config or ForestConfig()
    tc = config.tree_config(ds.n, ds.m)
    if inbag is None:
        inbag = np.stack([bootstrap_counts(ds.n, config.seed, b) for b in range(config.n_trees)])
    else:
        inbag = np.asarray(inbag, dtype=np.float64).reshape(-1, ds.n)
    trees = [grow_tree(ds, w, tc, rng=substream(config.seed, "mtry", b))
             for b, w in enumerate(inbag)]
    return ForestModel(trees, inbag, config, tc, ds)


def forest_weights(model: ForestModel, x, oob_for: int | None = None) -> np.ndarray:
    """alpha(x) over training indices, from all trees or from trees where
    subject ``oob_for`` is out of bag."""
    rows = None if oob_for is None else [oob_for]
    w = model.weight_matrix(np.asarray(x)[None, :], rows)[0]
    if oob_for is not None and not w.any():
        raise NoOobCoverage(f"subject {oob_for} is in-bag for every tree")
    return w


def predict_forest(model: ForestModel, x) -> StepCurve:
    return model.predict(x)


def oob_predictions(model: ForestModel) -> list:
    """Out-of-bag survival curve per training subject (None without coverage)."""
    ds = model.data
    W = model.weight_matrix(ds.x, np.arange(ds.n))
    return [model.predict_weights(w) if w.any() else None for w in W]


@dataclass(frozen=True)
class TuneResult:
    mtry: int
    ibs: dict
    uncovered: dict
    forest: ForestModel | None = None


def tune_mtry(ds: Dataset, config: ForestConfig | None = None, grid=None,
              keep_forest: bool = True) -> TuneResult:
    """Choose mtry by out-of-bag integrated Brier score (ties go to smaller mtry).

    Every candidate uses the same seed, so the bootstrap samples are shared.
    """
    from .metrics import ibs

    config = config or ForestConfig()
    grid = default_grid(ds.m) if grid is None else sorted({int(g) for g in grid})
    if not grid:
        raise ValueError("tuning grid is empty")
    if grid[0] < 1 or grid[-1] > ds.m:
        raise ValueError(f"tuning grid must lie in [1, {ds.m}]")
    scores, uncovered, forests = {}, {}, {}
    for mtry in grid:
        forest = grow_forest(ds, replace(config, mtry=mtry))
        preds = oob_predictions(forest)
        keep = np.array([p is not None for p in preds])
        uncovered[mtry] = int((~keep).sum())
        scores[mtry] = ibs(ds.subset(np.flatnonzero(keep)), [p for p in preds if p is not None],
                           censoring=ds)
        if keep_forest:
            forests[mtry] = forest
    best = min(grid, key=lambda g: (scores[g], g))
    return TuneResult(best, scores, uncovered, forests.get(best))
