"""One-sample survival estimators for truncated data, with case weights.

Three backends estimate the unbiased survival function S(t):

* ``LTRC_KM`` -- product-limit estimator with the risk set ``A <= u <= Z``
  (conditional on truncation times).
* ``MFLE`` -- Vardi's nonparametric MLE under length-biased sampling,
  computed by EM on the observed-time masses ``q_j = dF_T(t_j)`` and mapped
  to unbiased masses ``p_j`` proportional to ``q_j / t_j``.
* ``MCLE`` -- closed-form composite conditional-likelihood estimator that
  uses both ``A`` and the residual time ``V`` as truncation times.

All fits live on the grid of distinct observed times among records with
positive weight, and survival curves are right-continuous: the stored value
at ``t_j`` is S just after the jump at ``t_j``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .curves import CUMULATIVE_HAZARD, SURVIVAL, StepCurve
from .dataset import Dataset

# Hazard jumps are capped below 1 when the LTRC log-survival is needed.
KM_LOG_CLAMP = 1.0 - 1e-10


class Backend(str, enum.Enum):
    LTRC_KM = "ltrc"
    MFLE = "mfle"
    MCLE = "mcle"

    @classmethod
    def parse(cls, value) -> "Backend":
        if isinstance(value, cls):
            return value
        aliases = {"ltrc": cls.LTRC_KM, "km": cls.LTRC_KM, "ltrc_km": cls.LTRC_KM,
                   "mfle": cls.MFLE, "f": cls.MFLE, "mcle": cls.MCLE, "c": cls.MCLE}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown estimator backend {value!r}") from None


class EstimatorError(ValueError):
    pass


class EmptySampleError(EstimatorError):
    pass


class AllCensoredError(EstimatorError):
    """MFLE is undefined when no event is observed."""


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-8
    max_iter: int = 1000


# speed preset matching a 20-iteration EM cap
EM_FAST = EmConfig(tol=1e-8, max_iter=20)


@dataclass(frozen=True, eq=False)
class _Tabulated:
    """Weighted counts aggregated on the distinct-time grid."""

    a: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    w: np.ndarray
    grid: np.ndarray
    pos: np.ndarray  # grid index of each record's Z
    events: np.ndarray  # sum of w*delta at each grid time
    censored: np.ndarray  # sum of w*(1-delta) at each grid time

    @property
    def total(self) -> float:
        return float(self.w.sum())


def tabulate(a, z, delta, w=None) -> _Tabulated:
    a = np.asarray(a, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    delta = np.asarray(delta)
    w = np.ones(len(z)) if w is None else np.asarray(w, dtype=np.float64)
    if len(w) != len(z):
        raise ValueError("weights and data differ in length")
    if np.any(w < 0):
        raise ValueError("case weights must be nonnegative")
    keep = w > 0
    if not keep.all():
        a, z, delta, w = a[keep], z[keep], delta[keep], w[keep]
    if len(z) == 0:
        raise EmptySampleError("no records with positive weight")
    grid, pos = np.unique(z, return_inverse=True)
    h = len(grid)
    dw = w * (delta == 1)
    events = np.bincount(pos, weights=dw, minlength=h)
    censored = np.bincount(pos, weights=w - dw, minlength=h)
    return _Tabulated(a, z, delta, w, grid, pos, events, censored)


def _entered(tab: _Tabulated, starts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum of ``weights`` over records whose start time is <= each grid time."""
    order = np.argsort(starts, kind="stable")
    cum = np.concatenate(([0.0], np.cumsum(weights[order])))
    return cum[np.searchsorted(starts[order], tab.grid, side="right")]


def _exited_before(tab: _Tabulated, per_grid: np.ndarray) -> np.ndarray:
    """Sum of per-grid weights strictly before each grid time."""
    return np.concatenate(([0.0], np.cumsum(per_grid)[:-1]))


def risk_ltrc(tab: _Tabulated) -> np.ndarray:
    """Weighted risk set size sum_i w_i I(A_i <= t_j <= Z_i)."""
    return _entered(tab, tab.a, tab.w) - _exited_before(tab, tab.events + tab.censored)


# ---------------------------------------------------------------------------
# LTRC product-limit estimator


@dataclass(frozen=True, eq=False)
class KmFit:
    grid: np.ndarray
    hazard: np.ndarray
    survival: StepCurve
    log_survival: np.ndarray  # on the grid, hazard jumps clamped below 1
    backend: Backend = Backend.LTRC_KM

    def log_survival_at(self, t):
        return StepCurve(self.grid, self.log_survival, 0.0, CUMULATIVE_HAZARD)(t)


def fit_km(a, z, delta, w=None) -> KmFit:
    tab = tabulate(a, z, delta, w)
    return _km_from_tab(tab)


def _km_from_tab(tab: _Tabulated) -> KmFit:
    risk = risk_ltrc(tab)
    hazard = np.where(tab.events > 0, tab.events / risk, 0.0)
    surv = np.cumprod(1.0 - hazard)
    log_surv = np.cumsum(np.log1p(-np.minimum(hazard, KM_LOG_CLAMP)))
    return KmFit(tab.grid, hazard, StepCurve(tab.grid, surv, 1.0, SURVIVAL), log_surv)


def km_ltrc(ds: Dataset, w=None) -> StepCurve:
    """Product-limit curve with hazard jumps d(u) / sum_i w_i I(A_i <= u <= Z_i)."""
    return fit_km(ds.a, ds.z, ds.delta, w).survival


def km_right_censored(times, events, w=None) -> StepCurve:
    """Ordinary Kaplan-Meier curve (everyone at risk from time 0)."""
    times = np.asarray(times, dtype=np.float64)
    return fit_km(np.zeros_like(times), times, events, w).survival


# ---------------------------------------------------------------------------
# Vardi NPMLE via EM


@njit(cache=True)
def _em_kernel(t, events, censored, q, tol, max_iter, trace):
    h = t.shape[0]
    total = events.sum() + censored.sum()
    r = np.empty(h)
    tail = np.empty(h)
    new = np.empty(h)
    n_trace = max_iter + 1 if trace else 0
    ll = np.empty(n_trace)
    resid = np.inf
    it = 0
    while True:
        s = 0.0
        for j in range(h - 1, -1, -1):
            r[j] = q[j] / t[j]
            s += r[j]
            tail[j] = s
        if trace:
            v = 0.0
            for j in range(h):
                if events[j] > 0:
                    v += events[j] * np.log(q[j])
                if censored[j] > 0:
                    v += censored[j] * np.log(tail[j])
            ll[it] = v
        if it >= max_iter or resid < tol:
            break
        acc = 0.0
        tot = 0.0
        for j in range(h):
            if censored[j] > 0:
                acc += censored[j] / tail[j]
            new[j] = (events[j] + r[j] * acc) / total
            tot += new[j]
        resid = 0.0
        for j in range(h):
            v = new[j] / tot
            d = abs(v - q[j])
            if d > resid:
                resid = d
            q[j] = v
        it += 1
    return q, it, resid, ll[: it + 1] if trace else ll


@dataclass(frozen=True, eq=False)
class MfleFit:
    grid: np.ndarray
    q: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    survival: StepCurve
    iterations: int
    residual: float
    loglik_trace: np.ndarray = field(default=None, repr=False)
    backend: Backend = Backend.MFLE

    @property
    def log_survival(self) -> np.ndarray:
        return -np.cumsum(self.lam)

    def log_survival_at(self, t):
        """-(sum of discretized hazard jumps at grid times <= t)."""
        return StepCurve(self.grid, self.log_survival, 0.0, CUMULATIVE_HAZARD)(t)


def fit_mfle(a, z, delta, w=None, em: EmConfig | None = None, trace: bool = False) -> MfleFit:
    tab = tabulate(a, z, delta, w)
    return _mfle_from_tab(tab, em or EmConfig(), trace)


def _mfle_from_tab(tab: _Tabulated, em: EmConfig, trace: bool = False) -> MfleFit:
    if not np.any(tab.events > 0):
        raise AllCensoredError("MFLE needs at least one observed event")
    h = len(tab.grid)
    q0 = np.full(h, 1.0 / h)
    q, iters, resid, ll = _em_kernel(tab.grid, tab.events, tab.censored, q0,
                                     float(em.tol), int(em.max_iter), trace)
    r = q / tab.grid
    tail = np.cumsum(r[::-1])[::-1]
    p = r / tail[0]
    surv = np.concatenate((tail[1:] / tail[0], [0.0]))
    lam = r / tail
    lam[-1] = 1.0
    return MfleFit(tab.grid, q, p, lam, StepCurve(tab.grid, surv, 1.0, SURVIVAL),
                   int(iters), float(resid), ll if trace else None)


def mfle(ds: Dataset, w=None, cfg: EmConfig | None = None) -> MfleFit:
    return fit_mfle(ds.a, ds.z, ds.delta, w, cfg)


def em_loglik(ds: Dataset, w, q) -> float:
    """Observed-data weighted log-likelihood of masses ``q`` on the grid.

    sum_i w_i [delta_i log q(Z_i) + (1 - delta_i) log sum_{t_k >= Z_i} q_k / t_k]
    """
    tab = tabulate(ds.a, ds.z, ds.delta, w)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != tab.grid.shape:
        raise ValueError("mass vector does not match the distinct-time grid")
    if np.any(q < 0):
        raise ValueError("masses must be nonnegative")
    tail = np.cumsum((q / tab.grid)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        ev = np.where(tab.events > 0, tab.events * np.log(q), 0.0)
        ce = np.where(tab.censored > 0, tab.censored * np.log(tail), 0.0)
    return float(ev.sum() + ce.sum())


# ---------------------------------------------------------------------------
# Composite conditional-likelihood estimator


@dataclass(frozen=True, eq=False)
class McleFit:
    grid: np.ndarray
    cum_hazard: StepCurve
    survival: StepCurve
    n_clamped: int = 0
    backend: Backend = Backend.MCLE

    @property
    def log_survival(self) -> np.ndarray:
        return -self.cum_hazard.values

    def log_survival_at(self, t):
        return -self.cum_hazard(t)


def fit_mcle(a, z, delta, w=None) -> McleFit:
    tab = tabulate(a, z, delta, w)
    return _mcle_from_tab(tab)


def _mcle_from_tab(tab: _Tabulated) -> McleFit:
    ev = tab.delta == 1
    v = tab.z - tab.a
    # sum_j w_j delta_j I(V_j <= u <= Z_j)
    via_v = _entered(tab, v[ev], tab.w[ev]) - _exited_before(tab, tab.events)
    denom = risk_ltrc(tab) + via_v
    jumps = np.where(tab.events > 0, 2.0 * tab.events / np.where(denom > 0, denom, 1.0), 0.0)
    clamped = np.clip(jumps, 0.0, 1.0)
    surv = np.cumprod(1.0 - clamped)
    return McleFit(
        tab.grid,
        StepCurve(tab.grid, np.cumsum(jumps), 0.0, CUMULATIVE_HAZARD),
        StepCurve(tab.grid, surv, 1.0, SURVIVAL),
        int(np.sum(jumps > 1.0)),
    )


def mcle(ds: Dataset, w=None) -> McleFit:
    return fit_mcle(ds.a, ds.z, ds.delta, w)


# ---------------------------------------------------------------------------


def fit_backend(backend, a, z, delta, w=None, em: EmConfig | None = None):
    """Fit any backend; the result exposes ``survival``, ``grid`` and ``log_survival``."""
    backend = Backend.parse(backend)
    tab = tabulate(a, z, delta, w)
    if backend is Backend.LTRC_KM:
        return _km_from_tab(tab)
    if backend is Backend.MFLE:
        return _mfle_from_tab(tab, em or EmConfig())
    return _mcle_from_tab(tab)


def fit_survival(backend, a, z, delta, w=None, em: EmConfig | None = None) -> StepCurve:
    """Survival curve for prediction; MFLE falls back to MCLE without events."""
    try:
        return fit_backend(backend, a, z, delta, w, em).survival
    except AllCensoredError:
        return fit_mcle(a, z, delta, w).survival
