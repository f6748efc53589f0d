import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TINY_TREE_OUTPUTS
from earlyexit.data import QueryGroup
from earlyexit.ensemble import Ensemble, Tree, score_full
from earlyexit.scorer import (
    TraversalCost,
    backend_equivalence,
    map_queries,
    ranks_from_scores,
    resume_scoring,
    score_prefix,
)


def _group(tiny_data, qid):
    return next(g for g in tiny_data if g.query_id == qid)


@pytest.mark.parametrize("backend", ["tree", "document"])
def test_prefix_of_two_trees(tiny_model, tiny_data, backend):
    for g in tiny_data:
        st_ = score_prefix(tiny_model, g, 2, backend)
        expected = [sum(TINY_TREE_OUTPUTS[(g.query_id, i)][:2]) for i in range(len(g))]
        assert list(st_.partial_score) == expected
        assert st_.cost.ranker_trees == 2 * len(g)


def test_full_prefix_equals_full_score(tiny_model, tiny_data):
    for g in tiny_data:
        st_ = score_prefix(tiny_model, g, len(tiny_model))
        assert list(st_.partial_score) == [score_full(tiny_model, x) for x in g.features]


def test_tie_break_by_doc_index():
    assert list(ranks_from_scores(np.array([3.0, 3.0]))) == [1, 2]
    assert list(ranks_from_scores(np.array([1.0, 3.0, 3.0, 2.0]))) == [4, 1, 2, 3]


def test_sentinel_ranks_on_fixture(tiny_model, tiny_data):
    # partials of query 1 at s=2: (1.25, 2.75, 1.5, 1.25)
    st_ = score_prefix(tiny_model, _group(tiny_data, 1), 2)
    assert list(st_.sentinel_rank) == [3, 1, 2, 4]


def test_sentinel_bounds(tiny_model, tiny_data):
    with pytest.raises(ValueError, match="sentinel"):
        score_prefix(tiny_model, tiny_data.groups[0], 0)
    with pytest.raises(ValueError, match="sentinel"):
        score_prefix(tiny_model, tiny_data.groups[0], 5)


def test_resume_all_continued(tiny_model, tiny_data):
    for g in tiny_data:
        st_ = score_prefix(tiny_model, g, 2)
        st_.continued = np.ones(len(g), dtype=bool)
        resume_scoring(tiny_model, g, st_)
        for x, full in zip(g.features, st_.full_score):
            assert abs(full - score_full(tiny_model, x)) <= 1e-9
        assert st_.cost.ranker_trees == 4 * len(g)


def test_resume_all_exited(tiny_model, tiny_data):
    g = tiny_data.groups[0]
    st_ = score_prefix(tiny_model, g, 2)
    st_.continued = np.zeros(len(g), dtype=bool)
    resume_scoring(tiny_model, g, st_)
    assert st_.cost.ranker_trees == 2 * len(g)
    assert np.all(np.isnan(st_.full_score))


def test_resume_cost_one_of_two(tiny_model, tiny_data):
    g = _group(tiny_data, 2)
    st_ = score_prefix(tiny_model, g, 2)
    st_.continued = np.array([False, True])
    resume_scoring(tiny_model, g, st_)
    assert st_.cost.ranker_trees == 2 * 2 + 1 * 2
    assert st_.full_score[1] == 4.125 and np.isnan(st_.full_score[0])


def test_resume_needs_decisions(tiny_model, tiny_data):
    g = tiny_data.groups[0]
    st_ = score_prefix(tiny_model, g, 2)
    with pytest.raises(ValueError, match="decision missing"):
        resume_scoring(tiny_model, g, st_)
    st_.continued = np.ones(2, dtype=bool)
    with pytest.raises(ValueError, match="decision missing"):
        resume_scoring(tiny_model, g, st_)


def test_backend_equivalence_fixture(tiny_model, tiny_data, lgb_fixture):
    for g in tiny_data:
        for s in range(1, 5):
            assert backend_equivalence(tiny_model, g, s)
    ens, probes, _ = lgb_fixture
    single = QueryGroup(1, probes[:1], np.zeros(1, dtype=int))
    assert backend_equivalence(ens, single, 10)


@st.composite
def random_tree(draw, F):
    """Random binary tree in the array encoding, built by splitting random leaves."""
    n_int = draw(st.integers(0, 6))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    feats, thr, left, right = [], [], [], []
    leaves = [(-1, True)]  # (parent, is_left)
    for node in range(n_int):
        parent, is_left = leaves.pop(int(rng.integers(len(leaves))))
        feats.append(int(rng.integers(F)))
        thr.append(float(rng.normal()))
        left.append(None)
        right.append(None)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        leaves += [(node, True), (node, False)]
    for k, (parent, is_left) in enumerate(leaves):
        if parent >= 0:
            (left if is_left else right)[parent] = ~k
    values = rng.normal(size=len(leaves)) * 10 ** rng.uniform(-3, 3, size=len(leaves))
    return Tree.from_lists(feats, thr, left, right, values)


@st.composite
def ensemble_and_group(draw):
    F = draw(st.integers(1, 4))
    trees = tuple(draw(random_tree(F)) for _ in range(draw(st.integers(1, 12))))
    ens = Ensemble(trees, F, draw(st.floats(-5, 5)))
    n = draw(st.integers(1, 12))
    X = np.random.default_rng(draw(st.integers(0, 2**32 - 1))).normal(size=(n, F))
    return ens, QueryGroup(1, X, np.zeros(n, dtype=int))


@settings(max_examples=100, deadline=None)
@given(ensemble_and_group(), st.data())
def test_backend_equivalence_random(eg, data):
    ens, g = eg
    s = data.draw(st.integers(1, len(ens)))
    assert backend_equivalence(ens, g, s)


@settings(max_examples=100, deadline=None)
@given(ensemble_and_group(), st.data())
def test_staging_identity_and_rank_validity(eg, data):
    ens, g = eg
    s = data.draw(st.integers(1, len(ens)))
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=len(g), max_size=len(g))))
    st_ = score_prefix(ens, g, s)
    assert sorted(st_.sentinel_rank) == list(range(1, len(g) + 1))
    st_.continued = mask
    resume_scoring(ens, g, st_)
    T = len(ens)
    assert st_.cost.ranker_trees == len(g) * s + int(mask.sum()) * (T - s)
    for i in np.flatnonzero(mask):
        assert abs(st_.full_score[i] - score_full(ens, g.features[i])) <= 1e-9


def test_cost_addition():
    a = TraversalCost(3, 1)
    b = TraversalCost(4, 2, 10)
    assert a + b == TraversalCost(7, 3, 10)


def test_map_queries_keeps_order():
    assert map_queries(lambda x: x * x, range(20), threads=8) == [x * x for x in range(20)]


@settings(max_examples=100, deadline=None)
@given(ensemble_and_group(), st.data())
def test_packed_evaluation_matches_per_tree_routing(eg, data):
    ens, g = eg
    start = data.draw(st.integers(0, len(ens)))
    stop = data.draw(st.integers(start, len(ens)))
    want = np.array([[t.eval(x) for t in ens.trees[start:stop]] for x in g.features]).reshape(len(g), -1)
    assert np.array_equal(ens.leaf_values(g.features, start, stop), want)
    for x, row in zip(g.features, want):
        assert np.array_equal(ens.tree_outputs(x, start, stop), row)
