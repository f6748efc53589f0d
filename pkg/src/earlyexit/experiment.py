"""Efficiency/effectiveness evaluation of a strategy against full scoring."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .ensemble import Ensemble
from .gbdt import Forest
from .metrics import (
    TREE_COUNT,
    WALL_CLOCK,
    TradeoffPoint,
    cut_statistics,
    delta_pct,
    mean_ndcg,
    ndcg_at_k,
    speedup,
)
from .scorer import TraversalCost, map_queries, rank_order
from .strategies import Ept, Ert, Full, Ideal, Lear, PipelineResult, StrategyParams, run_pipeline

STRATEGIES = ("full", "ideal", "ert", "ept", "lear")
WALL_CLOCK_REPS = 5


@dataclass
class Reference:
    """Full-ensemble rankings and NDCG for a dataset."""

    rankings: list[np.ndarray]
    ndcg: list[float | None]
    cost: TraversalCost
    k: int

    @property
    def mean(self) -> float:
        return mean_ndcg(self.ndcg)


def full_reference(ens: Ensemble, ds: Dataset, k: int = 10, zero_idcg: str = "one",
                   gain: str = "exp", threads: int = 1) -> Reference:
    rankings = map_queries(lambda g: rank_order(ens.predict(g.features)), ds.groups, threads)
    ndcg = [ndcg_at_k(r, g.relevance, k, gain, zero_idcg) for r, g in zip(rankings, ds.groups)]
    cost = TraversalCost(ranker_trees=ds.num_documents * len(ens))
    return Reference(rankings, ndcg, cost, k)


def make_params(strategy: str, threshold: float | None = None, *, k_s: int = 15,
                classifier: Forest | None = None, k: int = 10) -> StrategyParams:
    """Strategy from its name and swept threshold (k_s for ERT, p for EPT, tau for LEAR)."""
    if strategy == "full":
        return Full()
    if strategy == "ideal":
        return Ideal(k)
    if strategy == "ert":
        return Ert(int(threshold if threshold is not None else k_s))
    if strategy == "ept":
        if threshold is None:
            raise ValueError("ept needs a proximity threshold p")
        return Ept(k_s, float(threshold))
    if strategy == "lear":
        if classifier is None:
            raise ValueError("lear needs a classifier")
        if threshold is None:
            raise ValueError("lear needs a probability threshold tau")
        return Lear(classifier, float(threshold))
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def threshold_of(params: StrategyParams) -> float | None:
    if isinstance(params, Ert):
        return float(params.k_s)
    if isinstance(params, Ept):
        return params.p
    if isinstance(params, Lear):
        return params.tau
    if isinstance(params, Ideal):
        return float(params.k)
    return None


def _median_latency_ns(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return statistics.median(times)


@dataclass
class Evaluation:
    point: TradeoffPoint
    result: PipelineResult
    ndcg: list[float | None]
    wall_clock_speedup: float | None = None


def evaluate(ens: Ensemble, ds: Dataset, s: int, params: StrategyParams, ref: Reference,
             *, merge_by_score: bool = False, threads: int = 1, zero_idcg: str = "one",
             gain: str = "exp", wall_clock: bool = False,
             reps: int = WALL_CLOCK_REPS) -> Evaluation:
    if isinstance(params, Full):
        s = len(ens)
    res = run_pipeline(ens, ds, s, params, merge_by_score, threads)
    ndcg = [
        ndcg_at_k(q.ranking, g.relevance, ref.k, gain, zero_idcg)
        for q, g in zip(res.queries, ds.groups)
    ]
    mean = mean_ndcg(ndcg)
    mu, sigma = cut_statistics(res.continued_counts)
    point = TradeoffPoint(
        strategy=params.name,
        sentinel=s,
        threshold=threshold_of(params),
        ndcg=mean,
        ndcg_full=ref.mean,
        delta_pct=delta_pct(mean, ref.mean),
        speedup=speedup(res.cost, ref.cost, TREE_COUNT),
        ks_mu=mu,
        ks_sigma=sigma,
    )
    wc = None
    if wall_clock:
        reps = max(reps, WALL_CLOCK_REPS)
        ee = _median_latency_ns(
            lambda: run_pipeline(ens, ds, s, params, merge_by_score, threads, timed=True), reps)
        full = _median_latency_ns(
            lambda: run_pipeline(ens, ds, len(ens), Full(), merge_by_score, threads), reps)
        wc = speedup(res.cost, ref.cost, WALL_CLOCK, latency_ee_ns=ee, latency_full_ns=full)
    return Evaluation(point, res, ndcg, wc)
