"""Sentinel-staged scoring of one query's candidates.

Scoring is split at the sentinel ``s``: every document gets the partial
score of trees ``0..s-1``; after the exit decision only the continued
documents traverse trees ``s..T-1``. Two traversal orders are provided and
produce bit-identical sums because both add tree outputs in ascending tree
order:

* ``"tree"``  - tree-major: each tree scores the whole query block.
* ``"document"`` - document-major: each document walks the trees in turn.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, TypeVar

import numpy as np

from .data import QueryGroup
from .ensemble import Ensemble

BACKENDS = ("tree", "document")

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class TraversalCost:
    ranker_trees: int = 0
    strategy_trees: int = 0
    strategy_overhead_ns: int | None = None

    def __add__(self, other: "TraversalCost") -> "TraversalCost":
        if self.strategy_overhead_ns is None and other.strategy_overhead_ns is None:
            ns = None
        else:
            ns = (self.strategy_overhead_ns or 0) + (other.strategy_overhead_ns or 0)
        return TraversalCost(
            self.ranker_trees + other.ranker_trees,
            self.strategy_trees + other.strategy_trees,
            ns,
        )

    @property
    def total_trees(self) -> int:
        return self.ranker_trees + self.strategy_trees


@dataclass
class ScoringState:
    query_id: int
    sentinel: int
    num_trees: int
    partial_score: np.ndarray
    sentinel_rank: np.ndarray
    continued: np.ndarray | None = None
    full_score: np.ndarray | None = None
    cost: TraversalCost = field(default_factory=TraversalCost)

    @property
    def n_candidates(self) -> int:
        return len(self.partial_score)

    @property
    def complete(self) -> bool:
        return self.continued is not None and self.full_score is not None


def check_sentinel(ens: Ensemble, s: int) -> int:
    if not 1 <= s <= len(ens):
        raise ValueError(f"sentinel {s} outside 1..{len(ens)}")
    return int(s)


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Document indices by descending score, ties by ascending index."""
    scores = np.asarray(scores)
    return np.lexsort((np.arange(len(scores)), -scores))


def ranks_from_scores(scores: np.ndarray) -> np.ndarray:
    """1-based ranks under :func:`rank_order`."""
    order = rank_order(scores)
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def _accumulate_document_major(ens: Ensemble, X: np.ndarray, start: int, stop: int,
                               init: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        # np.add.accumulate is strictly sequential: init + t_start + ... + t_{stop-1}
        vals = ens.tree_outputs(x, start, stop)
        out[i] = np.add.accumulate(np.concatenate(([init[i]], vals)))[-1]
    return out


def accumulate(ens: Ensemble, X: np.ndarray, start: int, stop: int,
               init: np.ndarray | None = None, backend: str = "tree") -> np.ndarray:
    """Add the outputs of trees ``start..stop-1`` to ``init`` (default base score)."""
    X = ens.check_features(np.atleast_2d(X))
    if init is None:
        init = np.full(X.shape[0], ens.base_score)
    if backend == "tree":
        return ens.partial(X, start, stop, init=init)
    if backend == "document":
        return _accumulate_document_major(ens, X, start, stop, np.asarray(init, dtype=np.float64))
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def score_prefix(ens: Ensemble, group: QueryGroup, s: int, backend: str = "tree") -> ScoringState:
    s = check_sentinel(ens, s)
    partial = accumulate(ens, group.features, 0, s, backend=backend)
    n = len(group)
    return ScoringState(
        query_id=group.query_id,
        sentinel=s,
        num_trees=len(ens),
        partial_score=partial,
        sentinel_rank=ranks_from_scores(partial),
        cost=TraversalCost(ranker_trees=n * s),
    )


def resume_scoring(ens: Ensemble, group: QueryGroup, state: ScoringState,
                   backend: str = "tree") -> ScoringState:
    """Finish scoring the continued documents; exited ones keep their partial score."""
    if state.continued is None or len(state.continued) != state.n_candidates:
        raise ValueError(f"query {state.query_id}: exit decision missing for some documents")
    cont = np.flatnonzero(state.continued)
    full = np.full(state.n_candidates, np.nan)
    if cont.size:
        full[cont] = accumulate(
            ens, group.features[cont], state.sentinel, len(ens),
            init=state.partial_score[cont], backend=backend,
        )
    state.full_score = full
    state.cost.ranker_trees += int(cont.size) * (len(ens) - state.sentinel)
    return state


def backend_equivalence(ens: Ensemble, group: QueryGroup, s: int) -> bool:
    """True when both traversal orders give bit-identical partial scores."""
    a = score_prefix(ens, group, s, backend="tree").partial_score
    b = score_prefix(ens, group, s, backend="document").partial_score
    return bool(np.array_equal(a.view(np.int64), b.view(np.int64)))


def map_queries(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item; results keep input order regardless of ``threads``."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
