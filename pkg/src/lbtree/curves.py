"""Right-continuous step functions for survival and cumulative-hazard estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

SURVIVAL = "survival"
CUMULATIVE_HAZARD = "cumulative_hazard"

IDENTITY = "identity"
S_LOG_S = "slogs"

# S log S is taken as its limit 0 below this value.
_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Step function taking ``values[j]`` on ``[times[j], times[j+1])``.

    ``value_before`` holds on ``[0, times[0])``; the last value extends to
    infinity.
    """

    times: np.ndarray
    values: np.ndarray
    value_before: float = 1.0
    kind: str = SURVIVAL

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")

    @property
    def h(self) -> int:
        return len(self.times)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right") - 1
        padded = np.concatenate(([self.value_before], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def left_limit(self, t):
        """Value just before ``t``."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="left") - 1
        padded = np.concatenate(([self.value_before], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def invariant_violations(self) -> list[str]:
        out = []
        if self.h and (np.any(np.diff(self.times) <= 0) or self.times[0] < 0):
            out.append("grid not strictly increasing and nonnegative")
        vals = np.concatenate(([self.value_before], self.values))
        if self.kind == SURVIVAL:
            if self.value_before != 1.0:
                out.append("survival curve must start at 1")
            if np.any(np.diff(vals) > 1e-12):
                out.append("survival values increase")
            if np.any(vals < 0) or np.any(vals > 1):
                out.append("survival values outside [0,1]")
        else:
            if self.value_before != 0.0:
                out.append("cumulative hazard must start at 0")
            if np.any(np.diff(vals) < -1e-12) or np.any(vals < 0):
                out.append("cumulative hazard decreases or is negative")
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            w.writerow([0, repr(float(self.value_before))])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, kind: str = SURVIVAL) -> "StepCurve":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        before = float(rows[0][1])
        times = [float(r[0]) for r in rows[1:]]
        values = [float(r[1]) for r in rows[1:]]
        return cls(np.array(times), np.array(values), before, kind)


def eval_at(c: StepCurve, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("curves are defined for t >= 0 only")
    return c(t)


def integrate_step(transform: str, c: StepCurve, upper: float) -> float:
    """Exact integral of ``transform(c)`` over ``[0, upper]``.

    ``transform`` is ``"identity"`` (S) or ``"slogs"`` (S log S, with the
    value 0 wherever S vanishes).
    """
    if transform not in (IDENTITY, S_LOG_S):
        raise ValueError(f"unknown transform {transform!r}")
    if c.kind != SURVIVAL:
        raise ValueError("integrate_step expects a survival curve")
    if upper <= 0:
        return 0.0
    knots = np.concatenate(([0.0], c.times[c.times < upper], [upper]))
    vals = np.concatenate(([c.value_before], c.values))[: len(knots) - 1]
    if transform == S_LOG_S:
        safe = np.where(vals > _TINY, vals, 1.0)
        vals = np.where(vals > _TINY, safe * np.log(safe), 0.0)
    return float(np.dot(vals, np.diff(knots)))
