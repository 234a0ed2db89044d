"""Per-subject influence scores used as the response transformation in trees.

LTRC log-rank score:  U_i = delta_i + log S(Z_i) - log S(A_i-)
LBRC full-likelihood score:
    U_i = delta_i + log S(Z_i) - int S log S dt / int S dt
where the integrals run over [0, t_h] of the node-local grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import IDENTITY, S_LOG_S, StepCurve, integrate_step
from .dataset import Dataset
from .estimators import (
    Backend,
    EmConfig,
    _km_from_tab,
    _mcle_from_tab,
    _mfle_from_tab,
    tabulate,
)

LTRC = "ltrc"
LBRC = "lbrc"


@dataclass(frozen=True, eq=False)
class InfluenceScores:
    u: np.ndarray
    backend: Backend
    score_kind: str


def ltrc_score_values(a, z, delta, w=None) -> np.ndarray:
    """Scores for the positive-weight records, in input order."""
    tab = tabulate(a, z, delta, w)
    fit = _km_from_tab(tab)
    log_s = fit.log_survival
    # log S just before A (subjects are at risk from A onward)
    k = np.searchsorted(tab.grid, tab.a, side="left")
    log_s_a = np.where(k > 0, log_s[np.maximum(k - 1, 0)], 0.0)
    return tab.delta + log_s[tab.pos] - log_s_a


def lbrc_correction(log_s: np.ndarray, grid: np.ndarray) -> float:
    """int_0^{t_h} S log S dt / int_0^{t_h} S dt for S = exp(log_s) on the grid."""
    curve = StepCurve(grid, np.exp(log_s), 1.0)
    upper = float(grid[-1])
    den = integrate_step(IDENTITY, curve, upper)
    return integrate_step(S_LOG_S, curve, upper) / den


def lbrc_score_values(a, z, delta, w=None, backend=Backend.MCLE,
                      em: EmConfig | None = None) -> np.ndarray:
    backend = Backend.parse(backend)
    tab = tabulate(a, z, delta, w)
    if backend is Backend.MFLE:
        fit = _mfle_from_tab(tab, em or EmConfig())
    elif backend is Backend.MCLE:
        fit = _mcle_from_tab(tab)
    else:
        raise ValueError("LBRC scores need the MFLE or MCLE backend")
    log_s = fit.log_survival
    return tab.delta + log_s[tab.pos] - lbrc_correction(log_s, tab.grid)


def _scatter(values, w, n):
    out = np.zeros(n)
    if w is None:
        return values
    out[np.asarray(w) > 0] = values
    return out


def ltrc_scores(ds: Dataset, w=None) -> InfluenceScores:
    u = ltrc_score_values(ds.a, ds.z, ds.delta, w)
    return InfluenceScores(_scatter(u, w, ds.n), Backend.LTRC_KM, LTRC)


def lbrc_scores(ds: Dataset, w=None, backend=Backend.MCLE,
                em: EmConfig | None = None) -> InfluenceScores:
    """Zero-weight records get score 0."""
    backend = Backend.parse(backend)
    u = lbrc_score_values(ds.a, ds.z, ds.delta, w, backend, em)
    return InfluenceScores(_scatter(u, w, ds.n), backend, LBRC)


def score_values(score: str, a, z, delta, w=None, em: EmConfig | None = None) -> np.ndarray:
    """Dispatch on the tree score code: ``ltrc``, ``lbrc-c`` or ``lbrc-f``."""
    if score == "ltrc":
        return ltrc_score_values(a, z, delta, w)
    if score == "lbrc-c":
        return lbrc_score_values(a, z, delta, w, Backend.MCLE)
    if score == "lbrc-f":
        return lbrc_score_values(a, z, delta, w, Backend.MFLE, em)
    raise ValueError(f"unknown score {score!r}")
