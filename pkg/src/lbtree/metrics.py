"""Prediction-error metrics and diagnostics.

Brier score with inverse-probability-of-censoring weights

    W_i(t) = (1 - I(Z_i > t)) delta_i / G(Z_i-) + I(Z_i > t) / G(t),

where G is the reverse Kaplan-Meier curve of the censoring times, its
integral over [0, max Z] (IBS), and the integrated L2 distance to an analytic
survival function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import StepCurve
from .dataset import Dataset
from .estimators import km_right_censored

L2_REFINEMENT = 2048


class MetricError(ValueError):
    pass


def censoring_curve(ds: Dataset) -> StepCurve:
    """Reverse Kaplan-Meier G on the Z scale (censorings are the events)."""
    return km_right_censored(ds.z, 1 - ds.delta)


def _as_matrix(predictions, t) -> np.ndarray:
    """(n, len(t)) survival values from curves or callables."""
    if isinstance(predictions, np.ndarray) and predictions.ndim == 2:
        return predictions
    return np.vstack([np.broadcast_to(np.asarray(p(t), dtype=np.float64), np.shape(t))
                      for p in predictions])


def _ipcw(ds: Dataset, t, g: StepCurve):
    """(n, k) weights and a mask of time points where G vanishes where needed."""
    z = ds.z[:, None]
    alive = z > t[None, :]
    g_t = g(t)
    g_z = g.left_limit(ds.z)
    bad_t = (g_t <= 0) & alive.any(axis=0)
    bad_z = (g_z <= 0) & (ds.delta == 1)
    if bad_z.any():
        # an event whose weight is undefined invalidates every t past it
        bad_t |= (ds.z[bad_z][:, None] <= t[None, :]).any(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dead_w = np.where((ds.delta == 1) & (g_z > 0), 1.0 / g_z, 0.0)
        alive_w = np.where(g_t > 0, 1.0 / g_t, 0.0)
    w = np.where(alive, alive_w[None, :], dead_w[:, None])
    return w, alive, bad_t


@dataclass(frozen=True, eq=False)
class BrierTrace:
    times: np.ndarray
    scores: np.ndarray
    excluded: np.ndarray

    @property
    def n_excluded(self) -> int:
        return int(self.excluded.sum())


def brier_curve(ds: Dataset, predictions, t, censoring: Dataset | StepCurve | None = None) -> BrierTrace:
    """Brier score at each time in ``t``; excluded points are NaN."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    g = _censoring(ds, censoring)
    w, alive, bad = _ipcw(ds, t, g)
    s = _as_matrix(predictions, t)
    resid = alive.astype(np.float64) - s
    scores = np.mean(w * resid * resid, axis=0)
    scores = np.where(bad, np.nan, scores)
    return BrierTrace(t, scores, bad)


def _censoring(ds, censoring):
    if censoring is None:
        return censoring_curve(ds)
    if isinstance(censoring, StepCurve):
        return censoring
    return censoring_curve(censoring)


def brier(ds: Dataset, predictions, t: float, censoring=None) -> float:
    trace = brier_curve(ds, predictions, [t], censoring)
    if trace.n_excluded:
        raise MetricError(f"censoring survival vanishes at t={t}")
    return float(trace.scores[0])


def _knots(ds: Dataset, predictions, upper: float) -> np.ndarray:
    parts = [np.array([0.0]), ds.z]
    for p in predictions:
        if isinstance(p, StepCurve):
            parts.append(p.times)
    k = np.unique(np.concatenate(parts))
    return k[k < upper]


def ibs_trace(ds: Dataset, predictions, censoring=None) -> tuple[float, BrierTrace]:
    """IBS over [0, max Z] plus the Brier trace at the integration knots.

    Between consecutive knots (0, every Z, every prediction jump) all terms
    are constant, so the step integral is exact. Knots where G vanishes are
    dropped from both the integral and its normalizing length.
    """
    if isinstance(predictions, np.ndarray):
        raise TypeError("ibs needs curve objects, not a value matrix")
    upper = float(ds.z.max())
    knots = _knots(ds, predictions, upper)
    trace = brier_curve(ds, predictions, knots, censoring)
    widths = np.diff(np.append(knots, upper))
    ok = ~trace.excluded
    length = float(widths[ok].sum())
    if length <= 0:
        raise MetricError("no evaluable time points")
    return float(np.dot(trace.scores[ok], widths[ok]) / length), trace


def ibs(ds: Dataset, predictions, censoring=None) -> float:
    return ibs_trace(ds, predictions, censoring)[0]


def integrated_l2(truth, predictions, test_x, horizon: float | None = None,
                  t_test=None, refinement: int = L2_REFINEMENT) -> float:
    """(1/n) sum_i (1/H) int_0^H {S(t|x_i) - S^(t|x_i)}^2 dt.

    ``truth`` is a TrueModel (or any object with ``survival(t, X)``); H is
    ``horizon`` or max(t_test). Predictions are step curves (constant between
    jumps) or callables; each interval between jumps and the refinement grid
    is integrated by Simpson's rule.
    """
    test_x = np.atleast_2d(np.asarray(test_x, dtype=np.float64))
    if horizon is None:
        if t_test is None:
            raise ValueError("need a horizon or the unbiased test failure times")
        horizon = float(np.max(t_test))
    base = np.linspace(0.0, horizon, refinement + 1)
    total = 0.0
    for i, p in enumerate(predictions):
        if isinstance(p, StepCurve):
            jumps = p.times[(p.times > 0) & (p.times < horizon)]
            knots = np.union1d(base, jumps)
        else:
            knots = base
        lo, hi = knots[:-1], knots[1:]
        mid = 0.5 * (lo + hi)
        x = test_x[i : i + 1]
        s_lo, s_mid, s_hi = (truth.survival(np.asarray(v)[None, :], x)[0] for v in (lo, mid, hi))
        if isinstance(p, StepCurve):
            # the step prediction is constant on [lo, hi)
            c = p(lo)
            f = ((s_lo - c) ** 2 + 4 * (s_mid - c) ** 2 + (s_hi - c) ** 2) / 6.0
        else:
            d_lo, d_mid, d_hi = (np.asarray(p(v), dtype=np.float64) for v in (lo, mid, hi))
            f = ((s_lo - d_lo) ** 2 + 4 * (s_mid - d_mid) ** 2 + (s_hi - d_hi) ** 2) / 6.0
        total += float(np.dot(f, hi - lo)) / horizon
    return total / len(predictions)


def stationarity_curves(ds: Dataset) -> tuple[StepCurve, StepCurve]:
    """Kaplan-Meier curves of the backward (A) and forward (V~) recurrence times."""
    if ds.n == 0:
        raise ValueError("empty dataset")
    s_a = km_right_censored(ds.a, np.ones(ds.n, dtype=np.int64))
    s_v = km_right_censored(ds.v_tilde, ds.delta)
    return s_a, s_v


def sup_distance(c1: StepCurve, c2: StepCurve) -> float:
    """sup_t |c1(t) - c2(t)| for two step curves (attained at a jump)."""
    t = np.union1d(c1.times, c2.times)
    if len(t) == 0:
        return abs(c1.value_before - c2.value_before)
    return float(max(np.max(np.abs(c1(t) - c2(t))), abs(c1.value_before - c2.value_before)))
