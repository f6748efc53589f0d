import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TINY_TREE_OUTPUTS, fixture_path
from earlyexit.ensemble import (
    Ensemble,
    SchemaError,
    Tree,
    eval_tree,
    load_native,
    parse_lightgbm_text,
    save_native,
    score_full,
)

STUMP = Tree.from_lists([0], [0.5], [-1], [-2], [-1.0, 2.0])


def test_stump_boundary_goes_left():
    assert eval_tree(STUMP, [0.5]) == -1.0
    assert eval_tree(STUMP, [0.6]) == 2.0


def test_depth_two_routing():
    # f0 <= 1.0 then f1 <= 2.0; leaves: LL=10, LR=20, R=30
    tree = Tree.from_lists([0, 1], [1.0, 2.0], [1, -1], [-3, -2], [10.0, 20.0, 30.0])
    assert eval_tree(tree, [0.0, 3.0]) == 20.0  # left at root, right at node 1
    assert eval_tree(tree, [0.0, 2.0]) == 10.0
    assert eval_tree(tree, [1.5, 0.0]) == 30.0


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(0)
    tree = Tree.from_lists([0, 1], [0.5, 0.25], [1, -1], [-3, -2], [10.0, 20.0, 30.0])
    X = rng.random((50, 2))
    assert list(tree.predict(X)) == [tree.eval(x) for x in X]


def test_additivity_of_two_stumps():
    plus_one = Tree.leaf(1.0)
    ens = Ensemble((plus_one, plus_one), 1)
    assert score_full(ens, [0.3]) == 2.0


def test_tiny_fixture_scores(tiny_model, tiny_data):
    for g in tiny_data:
        for d in g.documents:
            expected = sum(TINY_TREE_OUTPUTS[(g.query_id, d.doc_index)])
            assert score_full(tiny_model, d.features) == expected


def test_feature_length_mismatch(tiny_model):
    with pytest.raises(ValueError, match="expected 3 features"):
        score_full(tiny_model, [0.0, 1.0])


def test_nan_rejected(tiny_model):
    with pytest.raises(ValueError, match="NaN"):
        score_full(tiny_model, [0.0, np.nan, 1.0])


@pytest.mark.parametrize("kw, match", [
    (dict(split_feature=[0], threshold=[0.5], left=[-1], right=[-2], leaf_value=[1.0]), "leaves"),
    (dict(split_feature=[0, 0], threshold=[0.5, 0.1], left=[1, -1], right=[-2, -2],
          leaf_value=[1.0, 2.0, 3.0]), "permutation"),
    (dict(split_feature=[0, 0], threshold=[0.5, 0.1], left=[1, -1], right=[1, -2],
          leaf_value=[1.0, 2.0, 3.0]), "tree"),
    (dict(split_feature=[0], threshold=[0.5, 1.0], left=[-1], right=[-2],
          leaf_value=[1.0, 2.0]), "inconsistent"),
])
def test_malformed_trees(kw, match):
    with pytest.raises(SchemaError, match=match):
        Tree.from_lists(**kw)


def test_leaf_budget():
    values = list(range(65))
    # a left-leaning chain with 64 internal nodes
    left = [i + 1 for i in range(63)] + [-1]
    right = [-(i + 2) for i in range(64)]
    big = Tree.from_lists([0] * 64, [0.0] * 64, left, right, values)
    with pytest.raises(SchemaError, match="max_leaves"):
        Ensemble((big,), 1)
    assert len(Ensemble((big,), 1, max_leaves=65)) == 1


def test_feature_index_bound():
    with pytest.raises(SchemaError, match="num_features"):
        Ensemble((Tree.from_lists([2], [0.0], [-1], [-2], [0.0, 1.0]),), 2)


# --- native format ---------------------------------------------------------

def test_native_round_trip_stump():
    ens = Ensemble((STUMP,), 1, 0.25)
    back = load_native(save_native(ens))
    assert back.num_features == 1 and back.base_score == 0.25
    assert back.trees[0].same_structure(STUMP)


def test_native_rejects_empty_ensemble():
    with pytest.raises(SchemaError, match="at least one tree"):
        load_native(json.dumps({"num_features": 2, "base_score": 0.0, "trees": []}))


@pytest.mark.parametrize("doc, path", [
    ({"base_score": 0.0, "trees": []}, "$.num_features"),
    ({"num_features": 1, "trees": "x"}, "$.trees"),
    ({"num_features": 1, "trees": [{"split_feature": [0]}]}, "$.trees[0].threshold"),
    ({"num_features": 1, "trees": [dict(STUMP.to_dict(), leaf_value=[1.0, "a"])]},
     "$.trees[0].leaf_value[1]"),
])
def test_native_schema_errors_name_the_path(doc, path):
    with pytest.raises(SchemaError) as exc:
        load_native(json.dumps(doc))
    assert path in str(exc.value)


def test_native_round_trip_lightgbm(lgb_fixture):
    ens, _, _ = lgb_fixture
    back = load_native(save_native(ens))
    X = np.random.default_rng(11).random((100, ens.num_features)) * 4
    a, b = ens.predict(X), back.predict(X)
    assert np.max(np.abs(a - b)) <= 1e-12


# --- LightGBM text ---------------------------------------------------------

LGB_STUMP = """tree
version=v4
num_class=1
max_feature_idx=0

Tree=0
num_leaves=2
num_cat=0
split_feature=0
threshold=0.5
decision_type=2
left_child=-1
right_child=-2
leaf_value=1.5 -0.5
shrinkage=1

end of trees
"""


def test_lightgbm_stump():
    ens = parse_lightgbm_text(LGB_STUMP)
    assert len(ens) == 1 and ens.num_features == 1
    assert score_full(ens, [0.4]) == 1.5
    assert score_full(ens, [0.5]) == 1.5
    assert score_full(ens, [0.6]) == -0.5


def test_lightgbm_categorical_rejected():
    text = LGB_STUMP.replace("decision_type=2", "decision_type=1")
    with pytest.raises(SchemaError, match="Tree=0.*categorical"):
        parse_lightgbm_text(text)
    with pytest.raises(SchemaError, match="categorical"):
        parse_lightgbm_text(LGB_STUMP.replace("num_cat=0", "num_cat=1"))


def test_lightgbm_missing_array():
    text = LGB_STUMP.replace("right_child=-2\n", "")
    with pytest.raises(SchemaError, match="Tree=0: missing right_child"):
        parse_lightgbm_text(text)


def test_lightgbm_inconsistent_lengths():
    text = LGB_STUMP.replace("leaf_value=1.5 -0.5", "leaf_value=1.5")
    with pytest.raises(SchemaError, match="Tree=0: leaf_value"):
        parse_lightgbm_text(text)


def test_lightgbm_two_trees_keep_block_order():
    second = LGB_STUMP.split("Tree=0")[1].split("end of trees")[0].replace(
        "leaf_value=1.5 -0.5", "leaf_value=7 8")
    text = LGB_STUMP.replace("end of trees", "Tree=1" + second + "end of trees")
    ens = parse_lightgbm_text(text)
    assert len(ens) == 2
    assert list(ens.trees[0].leaf_value) == [1.5, -0.5]
    assert list(ens.trees[1].leaf_value) == [7.0, 8.0]


def test_lightgbm_single_leaf_tree():
    text = LGB_STUMP.replace("end of trees", "Tree=1\nnum_leaves=1\nleaf_value=0.25\n\nend of trees")
    ens = parse_lightgbm_text(text)
    assert score_full(ens, [0.0]) == 1.75


def test_lightgbm_fixture_matches_producer(lgb_fixture):
    ens, probes, scores = lgb_fixture
    assert len(ens) == 20 and probes.shape == (100, ens.num_features)
    assert np.max(np.abs(ens.predict(probes) - scores)) <= 1e-6
    assert max(abs(score_full(ens, x) - s) for x, s in zip(probes, scores)) <= 1e-6


# --- additivity ------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 20), st.integers(0, 10**6))
def test_prefix_suffix_additivity(cut, seed):
    from earlyexit.ensemble import load_model

    ens = load_model(fixture_path("lightgbm_model.txt"))
    cut = min(cut, len(ens))
    x = np.random.default_rng(seed).random((1, ens.num_features))
    head = ens.partial(x, 0, cut)
    tail = ens.partial(x, cut, None, init=np.zeros(1))
    assert abs(head[0] + tail[0] - score_full(ens, x[0])) <= 1e-9
