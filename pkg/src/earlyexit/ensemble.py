"""Additive regression-tree ensembles: evaluation, LightGBM import, JSON I/O.

Trees use the array encoding shared by LightGBM and the native JSON format:
internal node ``i`` has ``split_feature[i]``, ``threshold[i]``, ``left[i]``,
``right[i]``; a child reference ``c >= 0`` is an internal node, ``c < 0`` is
leaf ``~c`` (i.e. ``-(c + 1)``). Node 0 is the root. A tree with no internal
nodes is a single leaf.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

MAX_LEAVES = 64


class SchemaError(ValueError):
    """Invalid model document or model dump."""


@dataclass(frozen=True, eq=False)
class Tree:
    split_feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_value: np.ndarray

    @classmethod
    def from_lists(cls, split_feature, threshold, left, right, leaf_value) -> "Tree":
        tree = cls(
            np.asarray(split_feature, dtype=np.int64).reshape(-1),
            np.asarray(threshold, dtype=np.float64).reshape(-1),
            np.asarray(left, dtype=np.int64).reshape(-1),
            np.asarray(right, dtype=np.int64).reshape(-1),
            np.asarray(leaf_value, dtype=np.float64).reshape(-1),
        )
        tree.validate()
        return tree

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls.from_lists([], [], [], [], [value])

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_value)

    @property
    def num_internal(self) -> int:
        return len(self.split_feature)

    def validate(self, max_leaves: int | None = None, num_features: int | None = None) -> None:
        n_int = self.num_internal
        arrays = (self.threshold, self.left, self.right)
        if any(len(a) != n_int for a in arrays):
            raise SchemaError("split arrays have inconsistent lengths")
        if self.num_leaves != n_int + 1:
            raise SchemaError(f"{self.num_leaves} leaves for {n_int} internal nodes")
        if max_leaves is not None and self.num_leaves > max_leaves:
            raise SchemaError(f"{self.num_leaves} leaves exceeds max_leaves={max_leaves}")
        if n_int and self.split_feature.min() < 0:
            raise SchemaError("negative split feature")
        if num_features is not None and n_int and self.split_feature.max() >= num_features:
            raise SchemaError(
                f"split feature {int(self.split_feature.max())} >= num_features={num_features}"
            )
        if n_int and not np.all(np.isfinite(self.threshold)):
            # LightGBM writes +/-1e300 style bounds, never inf/nan
            raise SchemaError("non-finite threshold")
        # every node except the root referenced exactly once, every leaf exactly once
        children = np.concatenate([self.left, self.right])
        internal_refs = np.sort(children[children >= 0])
        leaf_refs = np.sort(~children[children < 0])
        if not np.array_equal(internal_refs, np.arange(1, n_int)):
            raise SchemaError("internal nodes do not form a tree rooted at node 0")
        if not np.array_equal(leaf_refs, np.arange(self.num_leaves)) and n_int:
            raise SchemaError("leaf references are not a permutation of leaves")
        # reachability from root rules out cycles given the counts above
        if n_int:
            stack, seen = [0], 0
            while stack:
                node = stack.pop()
                seen += 1
                if seen > n_int:
                    raise SchemaError("cycle in tree structure")
                for c in (self.left[node], self.right[node]):
                    if c >= 0:
                        stack.append(int(c))
            if seen != n_int:
                raise SchemaError("unreachable internal nodes")

    def eval(self, x: Sequence[float]) -> float:
        """Route one feature vector (``value <= threshold`` goes left)."""
        if self.num_internal == 0:
            return float(self.leaf_value[0])
        node = 0
        while node >= 0:
            if x[self.split_feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return float(self.leaf_value[~node])

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        """Leaf reached by every row of ``X``."""
        n = X.shape[0]
        if self.num_internal == 0:
            return np.zeros(n, dtype=np.int64)
        node = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        while active.size:
            cur = node[active]
            go_left = X[active, self.split_feature[cur]] <= self.threshold[cur]
            nxt = np.where(go_left, self.left[cur], self.right[cur])
            node[active] = nxt
            active = active[nxt >= 0]
        return ~node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_value[self.leaf_index(X)]

    def to_dict(self) -> dict[str, list]:
        return {
            "split_feature": [int(v) for v in self.split_feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "leaf_value": [float(v) for v in self.leaf_value],
        }

    def same_structure(self, other: "Tree") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("split_feature", "threshold", "left", "right", "leaf_value")
        )


def eval_tree(tree: Tree, features: Sequence[float]) -> float:
    return tree.eval(features)


@dataclass(frozen=True)
class _Packed:
    """All trees in flat arrays; child ``c < 0`` is global leaf ``~c``."""

    root: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_value: np.ndarray
    child: np.ndarray  # (nodes, 2): column 0 is right, column 1 is left


def _pack(trees: Sequence[Tree]) -> _Packed:
    roots, feats, thrs, lefts, rights, leaves = [], [], [], [], [], []
    n_nodes = n_leaves = 0

    def shift(child):
        return np.where(child >= 0, child + n_nodes, ~(~child + n_leaves))

    for t in trees:
        roots.append(n_nodes if t.num_internal else ~n_leaves)
        feats.append(t.split_feature)
        thrs.append(t.threshold)
        lefts.append(shift(t.left))
        rights.append(shift(t.right))
        leaves.append(t.leaf_value)
        n_nodes += t.num_internal
        n_leaves += len(t.leaf_value)
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.empty(0, dt)  # noqa: E731
    left, right = cat(lefts, np.int64), cat(rights, np.int64)
    return _Packed(np.array(roots, dtype=np.int64), cat(feats, np.int64), cat(thrs, np.float64),
                   left, right, cat(leaves, np.float64), np.column_stack([right, left]))


@dataclass(frozen=True, eq=False)
class Ensemble:
    trees: tuple[Tree, ...]
    num_features: int
    base_score: float = 0.0
    max_leaves: int = field(default=MAX_LEAVES, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if not self.trees:
            raise SchemaError("ensemble must contain at least one tree")
        for i, t in enumerate(self.trees):
            try:
                t.validate(self.max_leaves, self.num_features)
            except SchemaError as exc:
                raise SchemaError(f"trees[{i}]: {exc}") from None
        object.__setattr__(self, "_packed", _pack(self.trees))

    def __len__(self) -> int:
        return len(self.trees)

    def check_features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.num_features:
            raise ValueError(f"expected {self.num_features} features, got {X.shape[-1]}")
        if np.isnan(X).any():
            raise ValueError("NaN feature values are not supported")
        return X

    def leaf_values(self, X: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Outputs of trees ``start..stop-1`` for every row of ``X``, shape ``(n, stop - start)``.

        All (row, tree) pairs descend one level per step.
        """
        X = self.check_features(np.atleast_2d(X))
        stop = len(self.trees) if stop is None else stop
        pk = self._packed
        node = np.tile(pk.root[start:stop], (X.shape[0], 1))
        r, c = np.nonzero(node >= 0)
        while r.size:
            cur = node[r, c]
            nxt = np.where(X[r, pk.feature[cur]] <= pk.threshold[cur], pk.left[cur], pk.right[cur])
            node[r, c] = nxt
            keep = nxt >= 0
            r, c = r[keep], c[keep]
        return pk.leaf_value[~node]

    def tree_outputs(self, x: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Outputs of trees ``start..stop-1`` for one feature vector (no validation)."""
        stop = len(self.trees) if stop is None else stop
        pk = self._packed
        node = pk.root[start:stop].copy()
        active = (node >= 0).nonzero()[0]
        while active.size:
            cur = node[active]
            nxt = pk.child[cur, (x[pk.feature[cur]] <= pk.threshold[cur]).view(np.int8)]
            node[active] = nxt
            active = active[nxt >= 0]
        return pk.leaf_value[~node]

    def partial(self, X: np.ndarray, start: int = 0, stop: int | None = None,
                init: np.ndarray | None = None) -> np.ndarray:
        """Tree-major accumulation of trees ``start..stop-1`` over the rows of ``X``.

        Starts from ``init`` (default ``base_score``) and adds tree outputs in
        ascending tree order.
        """
        X = self.check_features(np.atleast_2d(X))
        acc = np.full(X.shape[0], self.base_score) if init is None else np.array(init, dtype=np.float64)
        V = self.leaf_values(X, start, stop)
        for j in range(V.shape[1]):
            acc += V[:, j]
        return acc

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.partial(X)

    def score(self, features: Sequence[float]) -> float:
        x = self.check_features(np.asarray(features, dtype=np.float64))
        if x.ndim != 1:
            raise ValueError("score expects a single feature vector")
        total = self.base_score
        for t in self.trees:
            total += t.eval(x)
        return float(total)


def score_full(ens: Ensemble, features: Sequence[float]) -> float:
    return ens.score(features)


# --- native JSON ----------------------------------------------------------

def ensemble_to_dict(ens: Ensemble) -> dict[str, Any]:
    return {
        "num_features": ens.num_features,
        "base_score": float(ens.base_score),
        "trees": [t.to_dict() for t in ens.trees],
    }


_TREE_KEYS = {
    "split_feature": int,
    "threshold": float,
    "left": int,
    "right": int,
    "leaf_value": float,
}


def ensemble_from_dict(doc: Any, max_leaves: int = MAX_LEAVES) -> Ensemble:
    if not isinstance(doc, dict):
        raise SchemaError("$: expected an object")
    nf = doc.get("num_features")
    if not isinstance(nf, int) or isinstance(nf, bool) or nf < 1:
        raise SchemaError("$.num_features: expected a positive integer")
    base = doc.get("base_score", 0.0)
    if not isinstance(base, (int, float)) or isinstance(base, bool):
        raise SchemaError("$.base_score: expected a number")
    trees_doc = doc.get("trees")
    if not isinstance(trees_doc, list):
        raise SchemaError("$.trees: expected a list")
    if not trees_doc:
        raise SchemaError("$.trees: ensemble must contain at least one tree")
    trees = []
    for i, td in enumerate(trees_doc):
        path = f"$.trees[{i}]"
        if not isinstance(td, dict):
            raise SchemaError(f"{path}: expected an object")
        arrays = {}
        for key, typ in _TREE_KEYS.items():
            val = td.get(key)
            if not isinstance(val, list):
                raise SchemaError(f"{path}.{key}: expected a list")
            for j, v in enumerate(val):
                ok = isinstance(v, int) if typ is int else isinstance(v, (int, float))
                if not ok or isinstance(v, bool):
                    raise SchemaError(f"{path}.{key}[{j}]: expected {typ.__name__}")
            arrays[key] = val
        try:
            trees.append(Tree.from_lists(**arrays))
        except SchemaError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    try:
        return Ensemble(tuple(trees), nf, float(base), max_leaves=max_leaves)
    except SchemaError as exc:
        raise SchemaError(f"$.{exc}") from None


def save_native(ens: Ensemble) -> str:
    return json.dumps(ensemble_to_dict(ens), indent=1)


def load_native(text: str, max_leaves: int = MAX_LEAVES) -> Ensemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"$: invalid JSON ({exc})") from None
    return ensemble_from_dict(doc, max_leaves)


# --- LightGBM text dump ---------------------------------------------------

_LGB_REQUIRED = ("split_feature", "threshold", "left_child", "right_child", "leaf_value")


def _lgb_tree(name: str, kv: dict[str, str]) -> Tree:
    if "num_leaves" not in kv:
        raise SchemaError(f"{name}: missing num_leaves")
    num_leaves = int(kv["num_leaves"])
    if int(kv.get("num_cat", "0")) > 0:
        raise SchemaError(f"{name}: categorical splits are not supported")
    if "leaf_value" not in kv:
        raise SchemaError(f"{name}: missing leaf_value")
    if num_leaves == 1:
        return Tree.leaf(float(kv["leaf_value"].split()[0]))
    for key in _LGB_REQUIRED:
        if key not in kv:
            raise SchemaError(f"{name}: missing {key}")
    arr = {k: kv[k].split() for k in _LGB_REQUIRED}
    n_int = num_leaves - 1
    for key in _LGB_REQUIRED:
        want = num_leaves if key == "leaf_value" else n_int
        if len(arr[key]) != want:
            raise SchemaError(f"{name}: {key} has {len(arr[key])} entries, expected {want}")
    if "decision_type" in kv:
        dtypes = [int(v) for v in kv["decision_type"].split()]
        if len(dtypes) != n_int:
            raise SchemaError(f"{name}: decision_type has {len(dtypes)} entries, expected {n_int}")
        for d in dtypes:
            if d & 1:
                raise SchemaError(f"{name}: categorical decision_type {d} is not supported")
            if (d >> 2) & 3 == 1:
                # zero-as-missing routes values near 0 by default direction
                raise SchemaError(f"{name}: zero-as-missing decision_type {d} is not supported")
    try:
        return Tree.from_lists(
            [int(v) for v in arr["split_feature"]],
            [float(v) for v in arr["threshold"]],
            [int(v) for v in arr["left_child"]],
            [int(v) for v in arr["right_child"]],
            [float(v) for v in arr["leaf_value"]],
        )
    except SchemaError as exc:
        raise SchemaError(f"{name}: {exc}") from None


def parse_lightgbm_text(text: str, max_leaves: int = MAX_LEAVES) -> Ensemble:
    """Build an :class:`Ensemble` from a LightGBM ``save_model`` text dump.

    Only numerical splits are accepted. The resulting ensemble reproduces the
    producer's raw score (no objective transform is applied).
    """
    header: dict[str, str] = {}
    blocks: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("end of trees"):
            break
        if not line or "=" not in line:
            continue
        key, _, val = line.partition("=")
        if key == "Tree":
            current = {}
            blocks.append((f"Tree={val}", current))
        elif current is None:
            header[key] = val
        else:
            current[key] = val
    if not blocks:
        raise SchemaError("no Tree=<k> blocks found")
    if "average_output" in header:
        raise SchemaError("averaged (random forest) models are not supported")
    if int(header.get("num_tree_per_iteration", "1")) != 1:
        raise SchemaError("multi-output models are not supported")
    if "max_feature_idx" in header:
        num_features = int(header["max_feature_idx"]) + 1
    else:
        num_features = 1 + max(
            (int(v) for _, kv in blocks for v in kv.get("split_feature", "").split()),
            default=0,
        )
    trees = tuple(_lgb_tree(name, kv) for name, kv in blocks)
    return Ensemble(trees, num_features, 0.0, max_leaves=max_leaves)


def load_model(path: str, max_leaves: int = MAX_LEAVES) -> Ensemble:
    """Load a native JSON model or a LightGBM text dump, by content sniffing."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return load_native(text, max_leaves)
    return parse_lightgbm_text(text, max_leaves)

