import json

import numpy as np
import pytest

from lbtree.dataset import Covariate, Dataset


def write_schema(path, schema):
    path.write_text(json.dumps([c.to_json() for c in schema]))
    return path


@pytest.fixture
def mixed_schema():
    return (
        Covariate("age"),
        Covariate("stage", "ordered", ("I", "II", "III")),
        Covariate("site", "categorical", ("lung", "liver", "colon")),
    )


@pytest.fixture
def small_ds(mixed_schema):
    rng = np.random.default_rng(7)
    n = 40
    a = rng.uniform(0, 2, n)
    z = a + rng.exponential(1.0, n)
    delta = rng.integers(0, 2, n)
    delta[0] = 1
    x = np.column_stack([rng.normal(60, 8, n), rng.integers(1, 4, n), rng.integers(0, 3, n)])
    return Dataset(a, z, delta, x, mixed_schema)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
