import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbtree.dataset import Dataset
from lbtree.estimators import (
    AllCensoredError,
    Backend,
    EmConfig,
    EmptySampleError,
    em_loglik,
    fit_mfle,
    km_ltrc,
    mcle,
    mfle,
)

TIGHT = EmConfig(tol=1e-14, max_iter=100_000)


def ds_of(a, z, d):
    return Dataset.from_arrays(np.asarray(a, float), np.asarray(z, float), np.asarray(d))


# --- LTRC Kaplan-Meier -----------------------------------------------------

def test_km_risk_adjusted_hand_example():
    s = km_ltrc(ds_of([1, 0], [2, 3], [1, 1]))
    assert s(2.0) == pytest.approx(0.5, abs=1e-12)
    assert s(3.0) == pytest.approx(0.0, abs=1e-12)


def test_km_no_events():
    s = km_ltrc(ds_of([0], [1], [0]))
    assert np.all(s.values == 1.0) and s(10.0) == 1.0


def test_km_plain_three_points():
    s = km_ltrc(ds_of([0, 0, 0], [1, 2, 3], [1, 1, 1]))
    assert s(1.0) == pytest.approx(2 / 3, abs=1e-12)
    assert s(2.0) == pytest.approx(1 / 3, abs=1e-12)
    assert s(3.0) == pytest.approx(0.0, abs=1e-12)


def test_km_empty_weight():
    with pytest.raises(EmptySampleError):
        km_ltrc(ds_of([0, 0], [1, 2], [1, 1]), np.zeros(2))


# --- MFLE ------------------------------------------------------------------

def test_mfle_uncensored_closed_form():
    fit = mfle(ds_of([0.5, 0.2, 1.0], [1, 2, 3], [1, 1, 1]), cfg=TIGHT)
    np.testing.assert_allclose(fit.q, [1 / 3] * 3, atol=1e-10)
    np.testing.assert_allclose(fit.p, [6 / 11, 3 / 11, 2 / 11], atol=1e-10)
    np.testing.assert_allclose(fit.survival.values, [5 / 11, 2 / 11, 0.0], atol=1e-10)
    np.testing.assert_allclose(fit.lam, [6 / 11, 3 / 5, 1.0], atol=1e-10)


def test_mfle_single_record():
    fit = mfle(ds_of([0.4], [1.7], [1]))
    assert fit.q.tolist() == [1.0]
    assert fit.survival(1.7) == 0.0
    assert fit.lam.tolist() == [1.0]


def test_mfle_censored_matches_direct_maximization():
    # Reference masses from maximizing the observed-data likelihood directly:
    # the two censored points force q = 0 at 1.5 and 2, q(1) = 1/5, and the
    # split of the remaining 0.8 solves a one-dimensional score equation.
    z = [1.0, 2.0, 3.0, 2.5, 1.5]
    fit = fit_mfle(np.zeros(5), z, [1, 0, 1, 1, 0], em=TIGHT)
    np.testing.assert_allclose(fit.q, [0.2, 0.0, 0.0, 0.43578166916005473, 0.3642183308399453],
                               atol=1e-9)


def test_mfle_all_censored():
    with pytest.raises(AllCensoredError):
        mfle(ds_of([0, 0], [1, 2], [0, 0]))


def test_mfle_weighted_equals_replicated():
    ds = ds_of([0.1, 0.3, 0.2], [1.0, 2.0, 2.5], [1, 0, 1])
    w = np.array([2, 1, 3])
    a, b = mfle(ds, w), mfle(ds.replicate(w))
    for name in ("q", "p", "lam"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-10)


def test_mfle_invariants_on_random_data():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, 60)
    z = a + rng.exponential(1, 60)
    d = rng.integers(0, 2, 60)
    d[0] = 1
    fit = mfle(ds_of(a, z, d), cfg=TIGHT)
    assert fit.q.sum() == pytest.approx(1, abs=1e-10) and np.all(fit.q >= 0)
    assert fit.p.sum() == pytest.approx(1, abs=1e-10)
    assert fit.lam[-1] == 1.0
    tails = np.cumsum(fit.p[::-1])[::-1]
    np.testing.assert_allclose(fit.lam[:-1], (fit.p / tails)[:-1], atol=1e-10)
    assert fit.survival.invariant_violations() == []


def test_em_iteration_cap():
    rng = np.random.default_rng(5)
    z = rng.exponential(1, 50) + 0.01
    d = rng.integers(0, 2, 50)
    d[0] = 1
    fit = fit_mfle(np.zeros(50), z, d, em=EmConfig(tol=0.0, max_iter=20))
    assert fit.iterations == 20 and fit.residual > 0


# --- MCLE ------------------------------------------------------------------

def test_mcle_hand_example():
    fit = mcle(ds_of([0.5, 1.0], [2.0, 3.0], [1, 1]))
    np.testing.assert_allclose(np.diff(np.concatenate(([0], fit.cum_hazard.values))), [0.5, 1.0],
                               atol=1e-12)
    assert fit.survival(2.0) == pytest.approx(0.5, abs=1e-12)
    assert fit.survival(3.0) == pytest.approx(0.0, abs=1e-12)


def test_mcle_single_censored():
    fit = mcle(ds_of([0.3], [1.2], [0]))
    assert np.all(fit.cum_hazard.values == 0) and np.all(fit.survival.values == 1)


def test_mcle_weighted_equals_replicated():
    ds = ds_of([0.1, 0.3, 0.2, 0.0], [1.0, 2.0, 2.5, 0.7], [1, 0, 1, 1])
    w = np.array([2, 1, 3, 1])
    a, b = mcle(ds, w), mcle(ds.replicate(w))
    np.testing.assert_allclose(a.cum_hazard.values, b.cum_hazard.values, atol=1e-12)


def test_mcle_jumps_bounded_by_one():
    # an event enters its own denominator twice (through A and through V)
    fit = mcle(ds_of([0.9], [1.0], [1]))
    assert fit.cum_hazard.values[-1] == pytest.approx(1.0)
    assert fit.survival.values[-1] == 0.0 and fit.n_clamped == 0


# --- log-likelihood ---------------------------------------------------------

def test_loglik_uniform():
    ds = ds_of([0, 0, 0], [1, 2, 3], [1, 1, 1])
    assert em_loglik(ds, None, np.full(3, 1 / 3)) == pytest.approx(3 * math.log(1 / 3), abs=1e-12)
    assert em_loglik(ds, None, np.full(3, 1 / 3)) == pytest.approx(-3.2958, abs=1e-4)


def test_loglik_single():
    assert em_loglik(ds_of([0.2], [1.0], [1]), None, [1.0]) == 0.0


def test_loglik_negative_mass():
    with pytest.raises(ValueError):
        em_loglik(ds_of([0, 0], [1, 2], [1, 1]), None, [1.2, -0.2])


# --- properties --------------------------------------------------------------

@st.composite
def lbrc_samples(draw, max_n=8, need_event=True):
    n = draw(st.integers(1, max_n))
    a = np.array(draw(st.lists(st.integers(0, 6), min_size=n, max_size=n)), float) / 2
    v = np.array(draw(st.lists(st.integers(1, 6), min_size=n, max_size=n)), float) / 2
    d = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    if need_event:
        d[0] = 1
    w = np.array(draw(st.lists(st.integers(1, 3), min_size=n, max_size=n)))
    return ds_of(a, a + v, d), w


@settings(max_examples=150, deadline=None)
@given(lbrc_samples())
def test_integer_weights_equal_replication(sample):
    ds, w = sample
    rep = ds.replicate(w)
    np.testing.assert_allclose(km_ltrc(ds, w).values, km_ltrc(rep).values, atol=1e-10)
    np.testing.assert_allclose(mcle(ds, w).cum_hazard.values, mcle(rep).cum_hazard.values, atol=1e-10)
    np.testing.assert_allclose(mfle(ds, w, TIGHT).q, mfle(rep, cfg=TIGHT).q, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(lbrc_samples())
def test_unit_weights_match_unweighted(sample):
    ds, _ = sample
    ones = np.ones(ds.n)
    assert np.array_equal(km_ltrc(ds, ones).values, km_ltrc(ds).values)
    assert np.array_equal(mcle(ds, ones).survival.values, mcle(ds).survival.values)
    assert np.array_equal(mfle(ds, ones).q, mfle(ds).q)


@settings(max_examples=100, deadline=None)
@given(lbrc_samples(max_n=10))
def test_survival_outputs_are_valid_curves(sample):
    ds, w = sample
    for curve in (km_ltrc(ds, w), mcle(ds, w).survival, mfle(ds, w).survival):
        assert curve.invariant_violations() == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=15))
def test_uncensored_mfle_is_empirical(times):
    z = np.array(times, float)
    fit = mfle(ds_of(np.zeros(len(z)), z, np.ones(len(z), int)), cfg=TIGHT)
    _, counts = np.unique(z, return_counts=True)
    np.testing.assert_allclose(fit.q, counts / len(z), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(lbrc_samples(max_n=10))
def test_mcle_symmetric_in_a_and_v(sample):
    ds, _ = sample
    d = np.ones(ds.n, int)
    one = mcle(ds_of(ds.a, ds.z, d))
    two = mcle(ds_of(ds.v_tilde, ds.z, d))
    np.testing.assert_allclose(one.cum_hazard.values, two.cum_hazard.values, atol=1e-12)


@settings(max_examples=150, deadline=None)
@given(lbrc_samples(max_n=10))
def test_em_ascent(sample):
    ds, w = sample
    fit = fit_mfle(ds.a, ds.z, ds.delta, w, EmConfig(tol=1e-12, max_iter=300), trace=True)
    assert np.all(np.diff(fit.loglik_trace) >= -1e-10)


def test_backend_parse():
    assert Backend.parse("F") is Backend.MFLE and Backend.parse("mcle") is Backend.MCLE
    with pytest.raises(ValueError):
        Backend.parse("cox")


def _lb_exponential(n, rng):
    # length-biased Exp(1) is Gamma(2, 1); the entry point is uniform on [0, T]
    t = rng.gamma(2.0, 1.0, n)
    return t * rng.uniform(size=n), t


def test_uncensored_mfle_matches_inverse_length_weighting():
    rng = np.random.default_rng(11)
    a, t = _lb_exponential(300, rng)
    fit = mfle(ds_of(a, t, np.ones(len(t), int)), cfg=TIGHT)
    o = np.sort(t)
    expected = 1.0 - np.cumsum(1 / o) / np.sum(1 / o)
    np.testing.assert_allclose(fit.survival.values, expected, atol=1e-10)


def _sup_error(curve):
    g = curve.times
    truth = np.exp(-g)
    return max(np.max(np.abs(curve(g) - truth)), np.max(np.abs(curve.left_limit(g) - truth)))


def test_sup_error_shrinks_with_n():
    means = []
    for n in (500, 8000):
        errs = []
        for seed in range(6):
            a, t = _lb_exponential(n, np.random.default_rng(seed))
            ds = ds_of(a, t, np.ones(n, int))
            errs.append([_sup_error(mfle(ds).survival), _sup_error(mcle(ds).survival)])
        means.append(np.mean(errs, axis=0))
    assert np.all(means[1] < 0.5 * means[0])
    assert np.all(means[1] < 0.05)
