"""Continue/Exit decisions at the sentinel and the resulting final ranking."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .data import Dataset, QueryGroup
from .ensemble import Ensemble
from .exitset import augment_group
from .gbdt import Forest
from .scorer import (
    ScoringState,
    TraversalCost,
    check_sentinel,
    map_queries,
    rank_order,
    resume_scoring,
    score_prefix,
)


@dataclass(frozen=True)
class Full:
    """No early exit: every document traverses the whole ensemble."""

    name = "full"


@dataclass(frozen=True)
class Ert:
    k_s: int
    name = "ert"

    def __post_init__(self):
        if self.k_s < 1:
            raise ValueError("ERT needs k_s >= 1")


@dataclass(frozen=True)
class Ept:
    k_s: int
    p: float
    name = "ept"

    def __post_init__(self):
        if self.k_s < 1:
            raise ValueError("EPT needs k_s >= 1")
        if not self.p >= 0:
            raise ValueError("EPT needs p >= 0")


@dataclass(frozen=True, eq=False)
class Lear:
    classifier: Forest
    tau: float
    name = "lear"

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("LEAR needs 0 < tau < 1")


@dataclass(frozen=True)
class Ideal:
    k: int = 10
    name = "ideal"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("ideal oracle needs k >= 1")


StrategyParams = Union[Full, Ert, Ept, Lear, Ideal]


@dataclass
class ExitDecision:
    continue_: np.ndarray
    cut: int | None = None  # per-query oracle cut, Ideal only

    @property
    def n_continued(self) -> int:
        return int(np.sum(self.continue_))


def apply_ert(state: ScoringState, k_s: int) -> ExitDecision:
    return ExitDecision(state.sentinel_rank <= k_s)


def apply_ept(state: ScoringState, k_s: int, p: float) -> ExitDecision:
    """Keep documents scoring at least ``sigma - p``, sigma being the k_s-th best partial score."""
    partial = state.partial_score
    if state.n_candidates < k_s:
        sigma = float(np.min(partial))
    else:
        sigma = float(partial[state.sentinel_rank == k_s][0])
    return ExitDecision(partial >= sigma - p)


def lear_probabilities(state: ScoringState, group: QueryGroup, classifier: Forest) -> np.ndarray:
    X = augment_group(group.features, state)
    if classifier.num_features != X.shape[1]:
        raise ValueError(
            f"classifier expects {classifier.num_features} features, "
            f"augmented layout has {X.shape[1]}"
        )
    return classifier.predict_proba(X)


def apply_lear(state: ScoringState, group: QueryGroup, classifier: Forest, tau: float) -> ExitDecision:
    proba = lear_probabilities(state, group, classifier)
    state.cost.strategy_trees += classifier.num_trees * state.n_candidates
    return ExitDecision(proba >= tau)


def ideal_cut(state: ScoringState, full_top_k, k: int = 10) -> tuple[ExitDecision, int]:
    """Smallest sentinel-rank prefix holding every document of the full top-k."""
    n = state.n_candidates
    top = np.asarray(list(full_top_k), dtype=np.int64)
    if top.size and (top.min() < 0 or top.max() >= n):
        raise ValueError("full_top_k refers to unknown documents")
    if n <= k:
        cut = n
    else:
        cut = int(state.sentinel_rank[top].max()) if top.size else 0
    return ExitDecision(state.sentinel_rank <= cut, cut), cut


def assemble_ranking(state: ScoringState, merge_by_score: bool = False) -> np.ndarray:
    """Final order of document indices.

    Default: continued documents by full score, then exited documents by
    partial score. ``merge_by_score`` sorts one pool by the final score of
    each document instead. Ties go to the lower document index.
    """
    if not state.complete:
        raise ValueError(f"query {state.query_id}: scoring pipeline incomplete")
    cont = state.continued
    final = np.where(cont, state.full_score, state.partial_score)
    if merge_by_score:
        return rank_order(final)
    idx = np.arange(state.n_candidates)
    # lexsort: last key is primary
    return np.lexsort((idx, -final, ~cont))


def decide(state: ScoringState, group: QueryGroup, ens: Ensemble, params: StrategyParams) -> ExitDecision:
    if isinstance(params, Full):
        return ExitDecision(np.ones(state.n_candidates, dtype=bool))
    if isinstance(params, Ert):
        return apply_ert(state, params.k_s)
    if isinstance(params, Ept):
        return apply_ept(state, params.k_s, params.p)
    if isinstance(params, Lear):
        return apply_lear(state, group, params.classifier, params.tau)
    if isinstance(params, Ideal):
        # the oracle looks at full scores for free
        full_top = rank_order(ens.predict(group.features))[: params.k]
        return ideal_cut(state, full_top, params.k)[0]
    raise TypeError(f"unknown strategy {params!r}")


@dataclass
class QueryResult:
    query_id: int
    ranking: np.ndarray
    decision: ExitDecision
    state: ScoringState


@dataclass
class PipelineResult:
    queries: list[QueryResult]
    cost: TraversalCost = field(default_factory=TraversalCost)

    @property
    def continued_counts(self) -> list[int]:
        return [q.decision.n_continued for q in self.queries]


def run_query(ens: Ensemble, group: QueryGroup, s: int, params: StrategyParams,
              merge_by_score: bool = False, backend: str = "tree",
              timed: bool = False) -> QueryResult:
    state = score_prefix(ens, group, s, backend=backend)
    t0 = time.perf_counter_ns() if timed else 0
    decision = decide(state, group, ens, params)
    if timed:
        state.cost.strategy_overhead_ns = time.perf_counter_ns() - t0
    state.continued = decision.continue_
    resume_scoring(ens, group, state, backend=backend)
    return QueryResult(group.query_id, assemble_ranking(state, merge_by_score), decision, state)


def run_pipeline(ens: Ensemble, ds: Dataset, s: int, params: StrategyParams,
                 merge_by_score: bool = False, threads: int = 1, backend: str = "tree",
                 timed: bool = False) -> PipelineResult:
    """Prefix scoring, exit decision, resume and assembly for every query."""
    s = check_sentinel(ens, s)
    results = map_queries(
        lambda g: run_query(ens, g, s, params, merge_by_score, backend, timed),
        ds.groups, threads,
    )
    cost = TraversalCost()
    for r in results:
        cost = cost + r.state.cost
    return PipelineResult(results, cost)
