import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlyexit.metrics import (
    WALL_CLOCK,
    cut_statistics,
    delta_pct,
    mean_ndcg,
    ndcg_at_k,
    precision_recall,
    speedup,
)
from earlyexit.scorer import TraversalCost

C, E = 1, 0


def test_ndcg_ideal_order():
    assert ndcg_at_k([0, 1], [3, 2], 2) == 1.0


def test_ndcg_hand_example():
    # ranked relevances (0, 3): DCG = 7/log2(3), IDCG = 7
    assert abs(ndcg_at_k([0, 1], [0, 3], 2) - 1 / math.log2(3)) <= 1e-12
    assert abs(ndcg_at_k([0, 1], [0, 3], 2) - 0.6309) <= 1e-4


def test_ndcg_zero_idcg_conventions():
    assert ndcg_at_k([1, 0], [0, 0], 10) == 1.0
    assert ndcg_at_k([1, 0], [0, 0], 10, zero_idcg="skip") is None
    assert mean_ndcg([0.5, None, 1.0]) == 0.75


def test_ndcg_linear_gain():
    # ranked (1, 2): DCG = 1 + 2/log2(3); IDCG = 2 + 1/log2(3)
    want = (1 + 2 / math.log2(3)) / (2 + 1 / math.log2(3))
    assert abs(ndcg_at_k([0, 1], [1, 2], 2, gain="linear") - want) <= 1e-12


def test_ndcg_rejects_non_permutation():
    with pytest.raises(ValueError, match="permutation"):
        ndcg_at_k([0, 0], [1, 2], 2)


def test_ndcg_cutoff():
    # relevant doc below the cutoff contributes nothing
    assert ndcg_at_k([0, 1, 2], [0, 0, 4], 2) == 0.0


def dcg_oracle(rels, k):
    return sum((2 ** r - 1) / math.log2(i + 2) for i, r in enumerate(rels[:k]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=6), st.integers(1, 8))
def test_ndcg_exhaustive_optimality(rels, k):
    best = ndcg_at_k(list(np.argsort(-np.array(rels), kind="stable")), rels, k)
    for perm in itertools.permutations(range(len(rels))):
        v = ndcg_at_k(list(perm), rels, k)
        assert 0.0 <= v <= 1.0 + 1e-12
        assert v <= best + 1e-12
        idcg = dcg_oracle(sorted(rels, reverse=True), k)
        if idcg > 0:
            assert abs(v - dcg_oracle([rels[i] for i in perm], k) / idcg) <= 1e-12


def test_precision_recall_perfect():
    pr = precision_recall([C, E, C], [C, E, C])
    assert pr == {"continue": (1.0, 1.0), "exit": (1.0, 1.0)}


def test_precision_recall_counts():
    pr = precision_recall([C, C, E, E], [C, E, E, E])
    assert pr["continue"] == (1.0, 0.5)
    assert pr["exit"][0] == pytest.approx(2 / 3) and pr["exit"][1] == 1.0


def test_precision_recall_all_exit():
    pr = precision_recall([C, E, E], [E, E, E])
    assert pr["continue"] == (1.0, 0.0)


def test_precision_recall_no_positives():
    pr = precision_recall([E, E], [E, C])
    assert pr["continue"][1] == 1.0


def test_speedup_worked_example():
    # T=100, s=50, two docs, one continues, 10-tree classifier
    ee = TraversalCost(ranker_trees=2 * 50 + 1 * 50, strategy_trees=2 * 10)
    full = TraversalCost(ranker_trees=200)
    assert ee.ranker_trees + ee.strategy_trees == 170
    assert speedup(ee, full) == 200 / 170


def test_speedup_limits():
    full = TraversalCost(ranker_trees=400)
    assert speedup(TraversalCost(400), full) == 1.0
    assert speedup(TraversalCost(200), full) == 2.0
    with pytest.raises(ValueError):
        speedup(TraversalCost(0), full)


def test_speedup_wall_clock():
    assert speedup(TraversalCost(1), TraversalCost(1), WALL_CLOCK,
                   latency_ee_ns=50.0, latency_full_ns=100.0) == 2.0


def test_cut_statistics():
    assert cut_statistics([10, 10, 10]) == (10.0, 0.0)
    assert cut_statistics([10, 30]) == (20.0, 10.0)
    with pytest.raises(ValueError):
        cut_statistics([])


def test_delta_pct():
    assert delta_pct(0.5, 0.5) == 0.0
    assert delta_pct(0.45, 0.5) == pytest.approx(-10.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=30), st.data(),
       st.integers(2, 100), st.integers(0, 20))
def test_speedup_consistency(b_mask, data, T, cls_trees):
    # A subset of B continues -> A is at least as fast
    a_mask = [b and data.draw(st.booleans()) for b in b_mask]
    s = data.draw(st.integers(1, T))
    n = len(b_mask)

    def cost(mask):
        return TraversalCost(n * s + sum(mask) * (T - s), n * cls_trees)

    full = TraversalCost(n * T)
    assert speedup(cost(a_mask), full) >= speedup(cost(b_mask), full)
