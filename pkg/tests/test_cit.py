from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbtree.cit import (
    TreeConfig,
    best_split,
    grow_tree,
    linear_statistic,
    one_hot,
    predict_tree,
    select_variable,
)
from lbtree.dataset import Covariate, Dataset
from lbtree.estimators import Backend, fit_survival
from lbtree.simgen import ScenarioSpec, sample_lbrc


def perm_moments(g, u):
    """Exact permutation mean and covariance of sum_i g_i u_pi(i)."""
    g = np.atleast_2d(np.asarray(g, float).T).T
    ts = np.array([g.T @ np.asarray(u)[list(p)] for p in permutations(range(len(u)))])
    return ts.mean(axis=0), np.cov(ts.T, bias=True).reshape(g.shape[1], g.shape[1])


def test_linear_statistic_worked_example():
    ls = linear_statistic([1, 2, 3, 4], [2, 4, 6, 8])
    assert ls.t_vec[0] == pytest.approx(60)
    assert ls.mu[0] == pytest.approx(50)
    assert ls.sigma[0, 0] == pytest.approx(100 / 3)
    assert ls.standardized == pytest.approx(1.73205, abs=1e-5)
    mu, sigma = perm_moments([1, 2, 3, 4], [2, 4, 6, 8])
    assert mu[0] == pytest.approx(50) and sigma[0, 0] == pytest.approx(100 / 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n),
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n))))
def test_moments_match_enumeration_numeric(gu):
    g, u = gu
    ls = linear_statistic(g, u)
    mu, sigma = perm_moments(g, u)
    np.testing.assert_allclose(ls.mu, mu, atol=1e-8)
    np.testing.assert_allclose(ls.sigma, sigma, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 6).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n))))
def test_moments_match_enumeration_categorical(cu):
    codes, u = cu
    g = one_hot(codes, 3)
    ls = linear_statistic(g, u)
    mu, sigma = perm_moments(g, u)
    np.testing.assert_allclose(ls.mu, mu, atol=1e-8)
    np.testing.assert_allclose(ls.sigma, sigma, atol=1e-7)
    assert np.all(np.linalg.eigvalsh(ls.sigma) >= -1e-8)
    assert 0.0 <= ls.p_value <= 1.0


def test_integer_weights_equal_replication():
    g = np.array([0.3, 1.2, 2.0, 3.5])
    u = np.array([1.0, -0.5, 0.2, 2.0])
    w = np.array([2, 1, 3, 1])
    a = linear_statistic(g, u, w)
    b = linear_statistic(np.repeat(g, w), np.repeat(u, w))
    np.testing.assert_allclose([a.t_vec[0], a.mu[0], a.sigma[0, 0], a.p_value],
                               [b.t_vec[0], b.mu[0], b.sigma[0, 0], b.p_value])


def test_constant_scores():
    ls = linear_statistic([1, 2, 3, 4], [3, 3, 3, 3])
    assert ls.t_vec[0] == pytest.approx(ls.mu[0])
    assert ls.c_value == 0.0 and ls.p_value == 1.0


def test_constant_covariate():
    ls = linear_statistic([2, 2, 2, 2], [1, 5, 3, 4])
    assert ls.c_value == 0.0 and ls.p_value == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 10_000))
def test_standardized_affine_invariant(scale, shift, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=12)
    u = rng.normal(size=12)
    one = linear_statistic(g, u).standardized
    two = linear_statistic(scale * g + shift, u).standardized
    assert two == pytest.approx(one, abs=1e-10)


def test_too_small_sample():
    with pytest.raises(ValueError):
        linear_statistic([1.0], [1.0])


def numeric_ds(x):
    x = np.asarray(x, float)
    x = x[:, None] if x.ndim == 1 else x
    n = len(x)
    return Dataset.from_arrays(np.zeros(n), np.ones(n), np.ones(n, int), x)


def test_select_planted_signal():
    rng = np.random.default_rng(3)
    n = 120
    u = rng.normal(size=n)
    x = rng.normal(size=(n, 5))
    x[:, 3] = np.exp(u)
    sel = select_variable(numeric_ds(x), range(5), u)
    assert sel.var == 3 and sel.reject
    assert sel.p_adjusted[3] == min(sel.p_adjusted.values())


def test_select_single_candidate():
    rng = np.random.default_rng(4)
    u = rng.normal(size=50)
    x = np.column_stack([rng.normal(size=50), u + 0.1 * rng.normal(size=50)])
    sel = select_variable(numeric_ds(x), [1], u, alpha=0.05, mtry=1)
    assert sel.var == 1 and sel.reject
    assert sel.p_adjusted[1] == pytest.approx(sel.p_raw[1])


def test_bonferroni_adjustment():
    rng = np.random.default_rng(5)
    u = rng.normal(size=40)
    x = rng.normal(size=(40, 4))
    sel = select_variable(numeric_ds(x), range(4), u)
    for j in range(4):
        assert sel.p_adjusted[j] == pytest.approx(min(1.0, 4 * sel.p_raw[j]))
    assert sel.reject == (min(sel.p_adjusted.values()) <= 0.05)


def test_select_needs_candidates():
    with pytest.raises(ValueError):
        select_variable(numeric_ds(np.arange(4.0)), [], np.arange(4.0))


def test_best_split_numeric_midpoint():
    ds = numeric_ds([1, 2, 3, 4])
    rule = best_split(ds, 0, np.array([1, 1, 10, 10.0]), TreeConfig(min_bucket=1, min_prob=0))
    assert rule.cut == 2.5 and rule.subset is None


def test_best_split_respects_min_bucket():
    ds = numeric_ds([1, 2, 3, 4])
    assert best_split(ds, 0, np.array([1, 1, 10, 10.0]), TreeConfig(min_bucket=3, min_prob=0)) is None


def categorical_ds(codes, levels=6):
    schema = (Covariate("g", "categorical", tuple(str(v) for v in range(1, levels + 1))),)
    n = len(codes)
    return Dataset(np.zeros(n), np.ones(n), np.ones(n, int), np.asarray(codes, float)[:, None], schema)


def test_best_split_categorical_subset():
    rng = np.random.default_rng(6)
    codes = np.repeat(np.arange(6), 10)
    u = np.where(codes < 3, 2.0, 0.0) + 0.1 * rng.normal(size=60)
    rule = best_split(categorical_ds(codes), 0, u, TreeConfig(min_bucket=1, min_prob=0))
    assert set(rule.subset) in ({0, 1, 2}, {3, 4, 5})


def test_unseen_level_goes_to_majority_side():
    codes = np.array([0] * 12 + [1] * 4 + [2] * 4)
    u = np.where(codes == 0, 1.0, 0.0) + np.linspace(0, 0.01, 20)
    rule = best_split(categorical_ds(codes, 4), 0, u, TreeConfig(min_bucket=1, min_prob=0))
    heavy_left = 0 in rule.subset
    assert (3 in rule.subset) == heavy_left


def noise_ds(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, n)
    z = a + rng.exponential(1.0, n)
    d = (rng.uniform(size=n) < 0.8).astype(int)
    schema = (Covariate("x1"), Covariate("x2"), Covariate("c", "categorical", ("a", "b", "c")))
    x = np.column_stack([rng.normal(size=n), rng.integers(0, 2, n), rng.integers(0, 3, n)])
    return Dataset(a, z, d, x, schema)


@pytest.mark.slow
def test_null_trees_are_mostly_stumps():
    stumps = sum(grow_tree(noise_ds(200, s), config=TreeConfig(score="lbrc-c"), seed=s).n_splits == 0
                 for s in range(60))
    assert stumps / 60 >= 0.9


def test_max_depth_zero_is_stump():
    ds, _ = sample_lbrc(ScenarioSpec("tree", "wd", 200, 0.2, seed=1))
    tree = grow_tree(ds, config=TreeConfig(max_depth=0))
    assert tree.n_splits == 0 and len(tree.terminals) == 1


def test_stump_prediction_is_one_sample_estimator():
    ds = noise_ds(60, 1)
    tree = grow_tree(ds, config=TreeConfig(max_depth=0, pred_backend="mcle"))
    direct = fit_survival(Backend.MCLE, ds.a, ds.z, ds.delta)
    got = predict_tree(tree, ds.x[0])
    np.testing.assert_array_equal(got.times, direct.times)
    np.testing.assert_array_equal(got.values, direct.values)


def test_terminal_km_prediction():
    ds = Dataset.from_arrays([1.0, 0.0], [2.0, 3.0], [1, 1], np.array([[0.0], [1.0]]))
    tree = grow_tree(ds, config=TreeConfig(score="ltrc", pred_backend="ltrc", max_depth=0))
    curve = predict_tree(tree, np.array([0.0]))
    np.testing.assert_allclose(curve([1.5, 2.0, 2.5, 3.0]), [1.0, 0.5, 0.5, 0.0])
    assert tree.predict(np.array([1.0])) is curve


@pytest.fixture(scope="module")
def grown():
    ds, _ = sample_lbrc(ScenarioSpec("tree", "wd", 300, 0.2, seed=11))
    return ds, grow_tree(ds, config=TreeConfig(score="lbrc-c", pred_backend="mcle"), seed=2)


def test_partition_and_bucket_sizes(grown):
    ds, tree = grown
    members = np.concatenate([nd.members for nd in tree.terminals])
    assert np.array_equal(np.sort(members), np.arange(ds.n))
    assert all(len(nd.members) >= 7 for nd in tree.terminals)
    for nd in tree.nodes:
        if not nd.is_terminal:
            left, right = (tree.nodes[c].members for c in nd.children)
            assert np.array_equal(np.sort(np.concatenate([left, right])), np.sort(nd.members))


def test_apply_matches_training_members(grown):
    ds, tree = grown
    ids = tree.apply(ds.x)
    for nd in tree.terminals:
        assert np.all(ids[nd.members] == nd.id)


def test_determinism(grown):
    ds, tree = grown
    again = grow_tree(ds, config=tree.config, seed=2)
    assert [(n.split, n.children) for n in again.nodes] == [(n.split, n.children) for n in tree.nodes]


def test_max_depth_respected():
    ds, _ = sample_lbrc(ScenarioSpec("tree", "wd", 300, 0.2, seed=11))
    tree = grow_tree(ds, config=TreeConfig(score="lbrc-c", max_depth=1))
    assert max(nd.depth for nd in tree.nodes) <= 1
