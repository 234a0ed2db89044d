import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbtree.dataset import Dataset
from lbtree.estimators import AllCensoredError, Backend
from lbtree.scores import lbrc_correction, lbrc_scores, ltrc_scores


def ds_of(a, z, d):
    return Dataset.from_arrays(np.asarray(a, float), np.asarray(z, float), np.asarray(d))


def test_ltrc_event_score():
    # KM: S(1) = 0.5, subject 0 entered before the first event
    u = ltrc_scores(ds_of([0, 0], [1, 2], [1, 1])).u
    assert u[0] == pytest.approx(1 + math.log(0.5), abs=1e-12)
    assert u[0] == pytest.approx(0.306853, abs=1e-6)


def test_ltrc_early_censoring_is_zero():
    u = ltrc_scores(ds_of([0, 0, 0], [0.5, 1, 2], [0, 1, 1])).u
    assert u[0] == 0.0


def test_ltrc_uses_entry_left_limit():
    # subject 2 enters exactly at the first event time
    ds = ds_of([0, 0, 1], [1, 2, 3], [1, 1, 1])
    u = ltrc_scores(ds).u
    # risk sets: {0,1,2} at 1 -> S(1) = 2/3; {1,2} at 2 -> 1/3; {2} at 3 -> 0
    log_s = np.log([2 / 3, 1 / 3])
    assert u[0] == pytest.approx(1 + log_s[0])
    assert u[1] == pytest.approx(1 + log_s[1])
    assert np.isfinite(u[2])


def test_ltrc_scores_scale_invariant():
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 1, 30)
    z = a + rng.exponential(1, 30)
    d = rng.integers(0, 2, 30)
    one = ltrc_scores(ds_of(a, z, d)).u
    two = ltrc_scores(ds_of(2 * a, 2 * z, d)).u
    np.testing.assert_allclose(one, two, atol=1e-12)


def test_lbrc_ratio_hand_integration():
    ratio = lbrc_correction(np.array([math.log(0.5), -np.inf]), np.array([1.0, 2.0]))
    assert ratio == pytest.approx(0.5 * math.log(0.5) / 1.5, abs=1e-12)
    assert ratio == pytest.approx(-0.231049, abs=1e-6)
    u = 1 + math.log(0.5) - ratio
    assert u == pytest.approx(0.537902, abs=1e-6)


def test_lbrc_no_early_events_gives_delta():
    # MCLE only jumps at events: S stays 1 until the single last event
    ds = ds_of([0.0, 0.1, 0.2], [1.0, 2.0, 3.0], [0, 0, 1])
    u = lbrc_scores(ds, backend=Backend.MCLE).u
    np.testing.assert_allclose(u[:2], ds.delta[:2], atol=1e-12)


def test_lbrc_three_subject_hand_values():
    ds = ds_of([0.5, 0.2, 1.0], [1, 2, 3], [1, 1, 1])
    # MFLE: lambda = (6/11, 3/5, 1); MCLE: dLambda = (2/4, 2/4, 2/2)
    expected = {}
    for name, log_s in (("mfle", -np.cumsum([6 / 11, 3 / 5, 1.0])), ("mcle", -np.array([0.5, 1.0, 2.0]))):
        s = np.exp(log_s)
        num = s[0] * log_s[0] + s[1] * log_s[1]
        den = 1.0 + s[0] + s[1]
        expected[name] = 1 + log_s - num / den
    f = lbrc_scores(ds, backend="mfle").u
    c = lbrc_scores(ds, backend="mcle").u
    np.testing.assert_allclose(f, expected["mfle"], atol=1e-9)
    np.testing.assert_allclose(c, expected["mcle"], atol=1e-12)
    assert not np.allclose(f, c)
    assert np.array_equal(np.argsort(f), np.argsort(c))


def test_lbrc_mfle_all_censored():
    with pytest.raises(AllCensoredError):
        lbrc_scores(ds_of([0, 0], [1, 2], [0, 0]), backend="mfle")


def test_zero_weight_records_get_zero():
    ds = ds_of([0, 0.1, 0.2, 0.3], [1, 2, 3, 4], [1, 1, 0, 1])
    w = np.array([1, 0, 2, 1])
    assert lbrc_scores(ds, w).u[1] == 0.0 and ltrc_scores(ds, w).u[1] == 0.0


@st.composite
def samples(draw):
    n = draw(st.integers(2, 12))
    a = np.array(draw(st.lists(st.floats(0, 3), min_size=n, max_size=n)))
    v = np.array(draw(st.lists(st.floats(0.01, 3), min_size=n, max_size=n)))
    d = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    d[0] = 1
    return ds_of(a, a + v, d)


@settings(max_examples=150, deadline=None)
@given(samples())
def test_scores_finite_and_ratio_nonpositive(ds):
    from lbtree.estimators import fit_mcle, fit_mfle

    for backend, fit in (("mfle", fit_mfle), ("mcle", fit_mcle)):
        u = lbrc_scores(ds, backend=backend).u
        assert np.all(np.isfinite(u))
        f = fit(ds.a, ds.z, ds.delta)
        log_s_z = f.log_survival[np.searchsorted(f.grid, ds.z)]
        assert np.all(u >= ds.delta + log_s_z - 1e-12)
    assert np.all(np.isfinite(ltrc_scores(ds).u))


@settings(max_examples=100, deadline=None)
@given(samples(), st.randoms(use_true_random=False))
def test_scores_permute_with_records(ds, rnd):
    perm = list(range(ds.n))
    rnd.shuffle(perm)
    perm = np.array(perm)
    shuffled = ds.subset(perm)
    for fn in (ltrc_scores, lambda d: lbrc_scores(d, backend="mfle"), lambda d: lbrc_scores(d, backend="mcle")):
        np.testing.assert_allclose(fn(shuffled).u, fn(ds).u[perm], atol=1e-9)
