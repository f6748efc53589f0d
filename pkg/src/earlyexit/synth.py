"""Seeded synthetic learning-to-rank benchmark.

Relevance is a noisy, monotone function of the features: a weighted sum
plus a positive interaction, a per-query difficulty shift and Gaussian
noise, cut into grades 0..4. The two best documents of every query are
at least grade 1; about 94% of documents are irrelevant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, QueryGroup

FEATURE_WEIGHTS = np.array([3.0, 2.5, 2.0, 1.5, 1.0, 0.8, 0.5, 0.3, 0.0, 0.0])


@dataclass(frozen=True)
class SynthConfig:
    num_features: int = 10
    min_docs: int = 20
    max_docs: int = 50
    noise: float = 0.05
    query_shift: float = 0.4
    feature_offset: float = 0.0
    min_relevant: int = 2
    grade_cuts: tuple[float, ...] = (11.0, 11.5, 11.9, 12.3)
    seed: int = 7


def make_dataset(num_queries: int, rng: np.random.Generator, cfg: SynthConfig = SynthConfig(),
                 qid_start: int = 1) -> Dataset:
    F = cfg.num_features
    w = np.zeros(F)
    m = min(F, len(FEATURE_WEIGHTS))
    w[:m] = FEATURE_WEIGHTS[:m]
    groups = []
    for q in range(num_queries):
        n = int(rng.integers(cfg.min_docs, cfg.max_docs + 1))
        U = rng.random((n, F))
        latent = U @ w + 2.0 * U[:, 0] * U[:, 1]
        latent += rng.normal(0.0, cfg.query_shift) + rng.normal(0.0, cfg.noise, n)
        rel = np.searchsorted(cfg.grade_cuts, latent, side="right").astype(np.int64)
        if cfg.min_relevant:
            # judged queries: the best few candidates are at least marginally relevant
            best = np.argsort(-latent, kind="stable")[: cfg.min_relevant]
            rel[best] = np.maximum(rel[best], 1)
        # query-level offset visible in the features but irrelevant to relevance
        X = U + rng.normal(0.0, cfg.feature_offset) if cfg.feature_offset else U
        groups.append(QueryGroup(qid_start + q, X, rel))
    return Dataset(tuple(groups), F)


# queries per split; mirrors a 60/20/5/15-style partitioning with a larger test split
SPLITS = {"ranker_train": 600, "exit_train": 300, "valid": 100, "test": 500}


def make_benchmark(cfg: SynthConfig = SynthConfig(), splits: dict[str, int] | None = None
                   ) -> dict[str, Dataset]:
    """Disjoint splits drawn from one seeded stream; query ids are unique across splits."""
    splits = SPLITS if splits is None else splits
    rng = np.random.default_rng(cfg.seed)
    out, qid = {}, 1
    for name, nq in splits.items():
        out[name] = make_dataset(nq, rng, cfg, qid_start=qid)
        qid += nq
    return out
