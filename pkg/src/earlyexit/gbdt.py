"""Small exact-greedy Newton boosting: weighted logistic classifier and squared-loss ranker."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .ensemble import Ensemble, SchemaError, Tree, ensemble_from_dict, ensemble_to_dict

log = logging.getLogger(__name__)

LOGISTIC = "logistic"
SQUARED = "squared"


@dataclass(frozen=True)
class TrainParams:
    num_trees: int = 10
    max_leaves: int = 32
    learning_rate: float = 0.1
    l2_lambda: float = 1.0
    min_examples_per_leaf: int = 5
    loss: str = LOGISTIC
    # restrict split search to these columns (gain-based feature subset)
    allowed_features: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.min_examples_per_leaf < 1:
            raise ValueError("min_examples_per_leaf must be >= 1")
        if self.loss not in (LOGISTIC, SQUARED):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(eq=False)
class Forest:
    ensemble: Ensemble
    loss: str = LOGISTIC
    split_gains: list[list[tuple[int, float]]] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    degenerate: bool = False
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def num_trees(self) -> int:
        return len(self.ensemble)

    @property
    def num_features(self) -> int:
        return self.ensemble.num_features

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return self.ensemble.predict(X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.loss != LOGISTIC:
            raise ValueError("predict_proba needs a logistic forest")
        return sigmoid(self.predict_raw(X))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def logistic_grad_hess(raw, label, weight):
    """Gradient and hessian of ``weight * logloss(sigmoid(raw), label)`` w.r.t. ``raw``."""
    p = sigmoid(raw)
    return weight * (p - label), weight * p * (1.0 - p)


def weighted_logloss(raw, label, weight) -> float:
    raw = np.asarray(raw, dtype=np.float64)
    return float(np.sum(weight * (np.logaddexp(0.0, raw) - label * raw)))


def weighted_squared_loss(raw, y, weight) -> float:
    raw = np.asarray(raw, dtype=np.float64)
    return float(np.sum(0.5 * weight * (raw - y) ** 2))


def predict_proba(forest: Forest, features: np.ndarray):
    X = np.asarray(features, dtype=np.float64)
    p = forest.predict_proba(np.atleast_2d(X))
    return float(p[0]) if X.ndim == 1 else p


def split_gain(GL, HL, GR, HR, lam):
    """Second-order gain of splitting a node into (L, R)."""
    G, H = GL + GR, HL + HR
    return 0.5 * (_score(GL, HL, lam) + _score(GR, HR, lam) - _score(G, H, lam))


def _score(G, H, lam):
    den = H + lam
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, G * G / np.where(den > 0, den, 1.0), 0.0)


@dataclass
class Split:
    feature: int
    threshold: float
    gain: float


def best_split(X: np.ndarray, g: np.ndarray, h: np.ndarray, sorted_rows: Sequence[np.ndarray],
               features: Sequence[int], lam: float, min_leaf: int) -> Split | None:
    """Exact greedy search over ``features``.

    ``sorted_rows[j]`` holds the node's rows ordered by ``X[:, features[j]]``.
    Candidate thresholds are midpoints between consecutive distinct values.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    best: Split | None = None
    n = len(sorted_rows[0]) if len(sorted_rows) else 0
    if n < 2 * min_leaf:
        return None
    G = float(np.sum(g[sorted_rows[0]]))
    H = float(np.sum(h[sorted_rows[0]]))
    for f, rows in zip(features, sorted_rows):
        xs = X[rows, f]
        GL = np.cumsum(g[rows])[:-1]
        HL = np.cumsum(h[rows])[:-1]
        gains = split_gain(GL, HL, G - GL, H - HL, lam)
        valid = xs[:-1] < xs[1:]
        valid[: min_leaf - 1] = False
        valid[n - min_leaf:] = False
        if not valid.any():
            continue
        gains = np.where(valid, gains, -np.inf)
        i = int(np.argmax(gains))
        if best is None or gains[i] > best.gain:
            lo, hi = xs[i], xs[i + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = Split(int(f), float(thr), float(gains[i]))
    return best


@dataclass
class _Leaf:
    sorted_rows: list[np.ndarray]
    parent: int  # internal node index, -1 for root
    is_left: bool
    split: Split | None = None


def grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray,
              params: TrainParams, features: Sequence[int],
              presorted: list[np.ndarray] | None = None) -> tuple[Tree, list[tuple[int, float]]]:
    """Leaf-wise growth: repeatedly split the leaf with the largest positive gain."""
    lam, min_leaf = params.l2_lambda, params.min_examples_per_leaf
    if presorted is None:
        presorted = [rows[np.argsort(X[rows, f], kind="stable")] for f in features]

    def make_leaf(sorted_rows, parent, is_left):
        leaf = _Leaf(sorted_rows, parent, is_left)
        leaf.split = best_split(X, g, h, sorted_rows, features, lam, min_leaf)
        return leaf

    leaves = [make_leaf(presorted, -1, True)]
    split_feature, threshold, left, right = [], [], [], []
    gains: list[tuple[int, float]] = []

    while len(leaves) < params.max_leaves:
        cand = [i for i, lf in enumerate(leaves) if lf.split is not None and lf.split.gain > 0]
        if not cand:
            break
        i = max(cand, key=lambda j: (leaves[j].split.gain, -j))
        lf = leaves[i]
        sp = lf.split
        node = len(split_feature)
        split_feature.append(sp.feature)
        threshold.append(sp.threshold)
        left.append(None)
        right.append(None)
        if lf.parent >= 0:
            (left if lf.is_left else right)[lf.parent] = node
        gains.append((sp.feature, sp.gain))

        go_left = np.zeros(X.shape[0], dtype=bool)
        node_rows = lf.sorted_rows[0]
        go_left[node_rows] = X[node_rows, sp.feature] <= sp.threshold
        lrows = [r[go_left[r]] for r in lf.sorted_rows]
        rrows = [r[~go_left[r]] for r in lf.sorted_rows]
        leaves[i] = make_leaf(lrows, node, True)
        leaves.insert(i + 1, make_leaf(rrows, node, False))

    values = []
    for k, lf in enumerate(leaves):
        r = lf.sorted_rows[0]
        G, H = float(np.sum(g[r])), float(np.sum(h[r]))
        den = H + lam
        values.append(-params.learning_rate * G / den if den > 0 else 0.0)
        if lf.parent >= 0:
            (left if lf.is_left else right)[lf.parent] = ~k
    return Tree.from_lists(split_feature, threshold, left, right, values), gains


def train_forest(X: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None,
                 params: TrainParams = TrainParams(),
                 callback: Callable[[int, Tree], None] | None = None) -> Forest:
    """Newton boosting from a raw score of 0.

    ``callback(round, tree)`` is invoked after each tree is added.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, F = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(y) != n or len(w) != n:
        raise ValueError("X, y and weights must have the same number of rows")
    if n < 2 * params.min_examples_per_leaf:
        raise ValueError(
            f"need at least {2 * params.min_examples_per_leaf} examples, got {n}"
        )
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if np.isnan(X).any():
        raise ValueError("NaN feature values are not supported")
    features = list(range(F)) if params.allowed_features is None else sorted(params.allowed_features)
    if any(not 0 <= f < F for f in features):
        raise ValueError("allowed_features out of range")

    if params.loss == LOGISTIC:
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic loss needs labels in {0, 1}")
        if np.all(y == y[0]):
            log.warning("all labels are %d; returning a constant forest", int(y[0]))
            return Forest(Ensemble((Tree.leaf(0.0),), F), LOGISTIC, [[]],
                          [weighted_logloss(np.zeros(n), y, w)], degenerate=True)

    def grad_hess(raw):
        if params.loss == LOGISTIC:
            return logistic_grad_hess(raw, y, w)
        return w * (raw - y), w.copy()

    def loss(raw):
        if params.loss == LOGISTIC:
            return weighted_logloss(raw, y, w)
        return weighted_squared_loss(raw, y, w)

    degenerate = bool(np.all(y == y[0]))
    if degenerate:
        log.warning("all labels are equal; the model is constant")

    rows = np.arange(n)
    presorted = [np.argsort(X[:, f], kind="stable") for f in features]
    raw = np.zeros(n)
    trees, all_gains, losses = [], [], [loss(raw)]
    for r in range(params.num_trees):
        g, h = grad_hess(raw)
        tree, gains = grow_tree(X, g, h, rows, params, features, presorted)
        trees.append(tree)
        all_gains.append(gains)
        raw = raw + tree.predict(X)
        losses.append(loss(raw))
        if callback is not None:
            callback(r, tree)
    ens = Ensemble(tuple(trees), F, max_leaves=max(params.max_leaves, 2))
    return Forest(ens, params.loss, all_gains, losses, degenerate=degenerate)


def feature_importance(forest: Forest) -> list[tuple[int, float]]:
    """Total split gain per feature, largest first; features never split on are absent."""
    totals: dict[int, float] = {}
    for tree_gains in forest.split_gains:
        for f, gain in tree_gains:
            totals[f] = totals.get(f, 0.0) + gain
    return sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))


def top_features(forest: Forest, m: int) -> tuple[int, ...]:
    return tuple(sorted(f for f, _ in feature_importance(forest)[:m]))


# --- serialization --------------------------------------------------------

def forest_to_dict(forest: Forest) -> dict[str, Any]:
    doc = ensemble_to_dict(forest.ensemble)
    doc["loss"] = forest.loss
    for td, gains in zip(doc["trees"], forest.split_gains):
        td["split_gain"] = [float(gv) for _, gv in gains]
        td["gain_feature"] = [int(f) for f, _ in gains]
    if forest.degenerate:
        doc["degenerate"] = True
    if forest.metadata:
        doc["metadata"] = forest.metadata
    return doc


def forest_from_dict(doc: Any) -> Forest:
    ens = ensemble_from_dict(doc, max_leaves=1 << 20)
    loss = doc.get("loss")
    if loss not in (LOGISTIC, SQUARED):
        raise SchemaError(f"$.loss: expected {LOGISTIC!r} or {SQUARED!r}")
    gains = []
    for td in doc["trees"]:
        gains.append(list(zip(td.get("gain_feature", []), td.get("split_gain", []))))
    return Forest(ens, loss, gains, degenerate=bool(doc.get("degenerate", False)),
                  metadata=dict(doc.get("metadata", {})))


def save_forest(forest: Forest) -> str:
    return json.dumps(forest_to_dict(forest), indent=1)


def load_forest(text: str) -> Forest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"$: invalid JSON ({exc})") from None
    return forest_from_dict(doc)
