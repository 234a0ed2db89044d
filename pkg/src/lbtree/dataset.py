"""Length-biased right-censored samples: schema, validation and CSV I/O.

Covariates are stored column-wise in a float matrix. Numeric values are kept
as-is, ordered covariates are encoded by level rank (1..L) and categorical
covariates by level index (0..L-1).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NUMERIC = "numeric"
ORDERED = "ordered"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, ORDERED, CATEGORICAL)

RESERVED_COLUMNS = ("entry", "time", "status")


class DatasetError(ValueError):
    """Base class for ingestion and schema problems."""


class MalformedRowError(DatasetError):
    pass


class TruncationError(DatasetError):
    """Observed time precedes the truncation (entry) time."""


class StatusError(DatasetError):
    pass


class UnknownLevelError(DatasetError):
    pass


class SchemaMismatchError(DatasetError):
    pass


@dataclass(frozen=True)
class Covariate:
    """One schema entry: a named covariate and its kind."""

    name: str
    kind: str = NUMERIC
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatchError(f"unknown covariate kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind != NUMERIC:
            if not self.levels:
                raise SchemaMismatchError(f"{self.name}: {self.kind} covariate needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaMismatchError(f"{self.name}: duplicate levels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def encode(self, raw: str) -> float:
        if self.kind == NUMERIC:
            try:
                value = float(raw)
            except ValueError:
                raise MalformedRowError(f"{self.name}: not a number: {raw!r}") from None
            if not math.isfinite(value):
                raise MalformedRowError(f"{self.name}: non-finite value {raw!r}")
            return value
        try:
            pos = self.levels.index(raw)
        except ValueError:
            raise UnknownLevelError(f"{self.name}: unknown level {raw!r}") from None
        return float(pos + 1) if self.kind == ORDERED else float(pos)

    def decode(self, value: float) -> str:
        if self.kind == NUMERIC:
            return repr(float(value))
        pos = int(value) - 1 if self.kind == ORDERED else int(value)
        return self.levels[pos]

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind != NUMERIC:
            out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Covariate":
        try:
            return cls(obj["name"], obj.get("kind", NUMERIC), tuple(obj.get("levels", ())))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatchError(f"bad schema entry {obj!r}") from exc


@dataclass(frozen=True)
class LbrcRecord:
    a: float
    z: float
    delta: int
    v_tilde: float
    x: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Dataset:
    """An observed LBRC sample (entry time A, exit time Z, status, covariates)."""

    a: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    schema: tuple[Covariate, ...]
    v_tilde: np.ndarray = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=np.int64))
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(len(a), -1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "schema", tuple(self.schema))
        if self.v_tilde is None:
            object.__setattr__(self, "v_tilde", z - a)
        else:
            object.__setattr__(self, "v_tilde", np.asarray(self.v_tilde, dtype=np.float64))
        if x.shape != (len(a), len(self.schema)):
            raise SchemaMismatchError(
                f"covariate matrix shape {x.shape} does not match n={len(a)}, m={len(self.schema)}"
            )

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def m(self) -> int:
        return len(self.schema)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def __len__(self):
        return self.n

    def record(self, i: int) -> LbrcRecord:
        return LbrcRecord(
            float(self.a[i]), float(self.z[i]), int(self.delta[i]),
            float(self.v_tilde[i]), tuple(float(v) for v in self.x[i]),
        )

    @property
    def records(self) -> list[LbrcRecord]:
        return [self.record(i) for i in range(self.n)]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.a[idx], self.z[idx], self.delta[idx], self.x[idx],
                       self.schema, self.v_tilde[idx])

    def replicate(self, counts) -> "Dataset":
        """Dataset with record i repeated counts[i] times (in order)."""
        return self.subset(np.repeat(np.arange(self.n), np.asarray(counts, dtype=int)))

    @classmethod
    def from_arrays(cls, a, z, delta, x=None, schema=None) -> "Dataset":
        a = np.asarray(a, dtype=np.float64)
        if x is None:
            x = np.zeros((len(a), 0))
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if schema is None:
            schema = [Covariate(f"X{j + 1}") for j in range(x.shape[1])]
        return cls(a, z, delta, x, tuple(schema))


def validate(ds: Dataset) -> list[tuple[int, str]]:
    """Report every record breaking a type invariant as ``(index, reason)``."""
    out = []
    for i in range(ds.n):
        a, z, d, v = ds.a[i], ds.z[i], ds.delta[i], ds.v_tilde[i]
        if not (np.isfinite(a) and np.isfinite(z)):
            out.append((i, "non-finite time"))
            continue
        if a < 0:
            out.append((i, f"negative truncation time a={a}"))
        if z <= 0:
            out.append((i, f"non-positive observed time z={z}"))
        if z < a:
            out.append((i, f"truncation inconsistency z={z} < a={a}"))
        if d not in (0, 1):
            out.append((i, f"status {d} outside {{0,1}}"))
        if not abs(v - (z - a)) <= 1e-12:
            out.append((i, f"v_tilde={v} differs from z-a={z - a}"))
        for j, cov in enumerate(ds.schema):
            val = ds.x[i, j]
            if cov.kind == NUMERIC:
                if not np.isfinite(val):
                    out.append((i, f"{cov.name}: non-finite value"))
            else:
                lo = 1 if cov.kind == ORDERED else 0
                if val != int(val) or not lo <= val < lo + cov.n_levels:
                    out.append((i, f"{cov.name}: code {val} outside level range"))
    return out


def load_schema(path) -> tuple[Covariate, ...]:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatchError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaMismatchError(f"{path}: schema must be a JSON array")
    return tuple(Covariate.from_json(obj) for obj in raw)


def save_schema(schema: Iterable[Covariate], path) -> None:
    Path(path).write_text(json.dumps([c.to_json() for c in schema], indent=2) + "\n")


def _parse_row(row: Sequence[str], lineno: int, schema: Sequence[Covariate]):
    if len(row) != 3 + len(schema):
        raise MalformedRowError(f"line {lineno}: expected {3 + len(schema)} fields, got {len(row)}")
    if any(cell.strip() == "" for cell in row):
        raise MalformedRowError(f"line {lineno}: missing value")
    try:
        a, z = float(row[0]), float(row[1])
    except ValueError:
        raise MalformedRowError(f"line {lineno}: entry/time must be numbers") from None
    if not (math.isfinite(a) and math.isfinite(z)) or a < 0 or z <= 0:
        raise MalformedRowError(f"line {lineno}: need finite entry >= 0 and time > 0")
    if z < a:
        raise TruncationError(f"line {lineno}: time {z} < entry {a}")
    try:
        status = float(row[2])
    except ValueError:
        raise StatusError(f"line {lineno}: status {row[2]!r} is not 0 or 1") from None
    if status not in (0.0, 1.0):
        raise StatusError(f"line {lineno}: status {row[2]!r} is not 0 or 1")
    try:
        x = [cov.encode(cell.strip()) for cov, cell in zip(schema, row[3:])]
    except DatasetError as exc:
        raise type(exc)(f"line {lineno}: {exc}") from None
    return a, z, int(status), x


def load_csv(path, schema_path) -> Dataset:
    schema = load_schema(schema_path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRowError(f"{path}: empty file") from None
        if tuple(header[:3]) != RESERVED_COLUMNS:
            raise SchemaMismatchError(f"{path}: header must start with entry,time,status")
        if header[3:] != [c.name for c in schema]:
            raise SchemaMismatchError(
                f"{path}: covariate columns {header[3:]} do not match schema {[c.name for c in schema]}"
            )
        rows = [_parse_row(row, k + 2, schema) for k, row in enumerate(reader) if row]
    a = np.array([r[0] for r in rows], dtype=np.float64)
    z = np.array([r[1] for r in rows], dtype=np.float64)
    d = np.array([r[2] for r in rows], dtype=np.int64)
    x = np.array([r[3] for r in rows], dtype=np.float64).reshape(len(rows), len(schema))
    return Dataset(a, z, d, x, schema)


def save_csv(ds: Dataset, path, schema_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(RESERVED_COLUMNS) + ds.names)
        for i in range(ds.n):
            w.writerow([repr(float(ds.a[i])), repr(float(ds.z[i])), int(ds.delta[i])]
                       + [cov.decode(ds.x[i, j]) for j, cov in enumerate(ds.schema)])
    if schema_path is not None:
        save_schema(ds.schema, schema_path)


def check_same_schema(expected: Sequence[Covariate], ds: Dataset) -> None:
    if tuple(expected) != ds.schema:
        raise SchemaMismatchError("data schema differs from the model's training schema")
