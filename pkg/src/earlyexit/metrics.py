"""Ranking quality, classifier quality and cost metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .scorer import TraversalCost

TREE_COUNT = "tree-count"
WALL_CLOCK = "wall-clock"

CONTINUE = 1
EXIT = 0


def dcg_at_k(rels_in_rank_order: Sequence[int], k: int, gain: str = "exp") -> float:
    rels = np.asarray(rels_in_rank_order, dtype=np.float64)[:k]
    if gain == "exp":
        g = np.power(2.0, rels) - 1.0
    elif gain == "linear":
        g = rels
    else:
        raise ValueError(f"unknown gain {gain!r}")
    disc = np.log2(np.arange(2, len(rels) + 2))
    return float(np.sum(g / disc))


def ndcg_at_k(ranking: Sequence[int], relevances: Sequence[int], k: int = 10,
              gain: str = "exp", zero_idcg: str = "one") -> float | None:
    """NDCG@k of ``ranking`` (document indices, best first).

    ``zero_idcg`` decides queries without relevant documents: ``"one"`` scores
    them 1.0, ``"skip"`` returns None so callers can drop them from the mean.
    """
    rel = np.asarray(relevances)
    ranking = np.asarray(ranking, dtype=np.int64)
    n = len(rel)
    if len(ranking) != n or not np.array_equal(np.sort(ranking), np.arange(n)):
        raise ValueError("ranking is not a permutation of the query's documents")
    if k < 1:
        raise ValueError("k must be >= 1")
    idcg = dcg_at_k(np.sort(rel)[::-1], k, gain)
    if idcg == 0.0:
        if zero_idcg == "one":
            return 1.0
        if zero_idcg == "skip":
            return None
        raise ValueError(f"unknown zero_idcg convention {zero_idcg!r}")
    return dcg_at_k(rel[ranking], k, gain) / idcg


def mean_ndcg(values: Sequence[float | None]) -> float:
    kept = [v for v in values if v is not None]
    if not kept:
        raise ValueError("no queries to average")
    total = 0.0
    for v in kept:  # fixed query order keeps the mean reproducible
        total += v
    return total / len(kept)


def precision_recall(true: Sequence[int], predicted: Sequence[int]) -> dict[str, tuple[float, float]]:
    """Per-class ``(precision, recall)`` for the Continue (1) and Exit (0) classes.

    A class never predicted has precision 1.0; a class never present has
    recall 1.0.
    """
    t = np.asarray(true, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError("true and predicted labels differ in length")
    out = {}
    for name, cls in (("continue", CONTINUE), ("exit", EXIT)):
        tp = int(np.sum((p == cls) & (t == cls)))
        n_pred = int(np.sum(p == cls))
        n_true = int(np.sum(t == cls))
        out[name] = (tp / n_pred if n_pred else 1.0, tp / n_true if n_true else 1.0)
    return out


def speedup(cost_ee: TraversalCost, cost_full: TraversalCost, mode: str = TREE_COUNT,
            latency_ee_ns: float | None = None, latency_full_ns: float | None = None) -> float:
    """Full-scoring cost over early-exit cost.

    Tree-count mode divides ranker tree traversals of full scoring by ranker
    plus classifier traversals of the early-exit run. Wall-clock mode divides
    measured latencies (the early-exit latency already includes strategy time).
    """
    if mode == TREE_COUNT:
        den = cost_ee.ranker_trees + cost_ee.strategy_trees
        if den == 0:
            raise ValueError("early-exit cost is zero")
        return cost_full.ranker_trees / den
    if mode == WALL_CLOCK:
        if latency_ee_ns is None or latency_full_ns is None:
            raise ValueError("wall-clock speedup needs both latencies")
        if latency_ee_ns <= 0:
            raise ValueError("early-exit latency is zero")
        return latency_full_ns / latency_ee_ns
    raise ValueError(f"unknown cost mode {mode!r}")


def cut_statistics(counts: Sequence[int]) -> tuple[float, float]:
    """Population mean and standard deviation of per-query continued counts."""
    if len(counts) == 0:
        raise ValueError("no queries")
    a = np.asarray(counts, dtype=np.float64)
    mu = float(np.mean(a))
    return mu, float(math.sqrt(np.mean((a - mu) ** 2)))


@dataclass(frozen=True)
class TradeoffPoint:
    strategy: str
    sentinel: int
    threshold: float | None
    ndcg: float
    ndcg_full: float
    delta_pct: float
    speedup: float
    ks_mu: float
    ks_sigma: float

    def as_dict(self) -> dict:
        return asdict(self)


def delta_pct(ndcg: float, ndcg_full: float) -> float:
    if ndcg_full == 0:
        raise ValueError("reference NDCG is zero")
    return 100.0 * (ndcg - ndcg_full) / ndcg_full
