"""Training examples for the learned exit classifier.

Augmented feature layout, for a dataset with ``F`` raw features:

====== ===============================================
0..F-1 raw document features
F      partial score at the sentinel
F+1    partial score min-max normalised within the query
F+2    rank at the sentinel (1 = best)
F+3    number of candidates of the query
====== ===============================================
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Document, QueryGroup, format_letor_line
from .ensemble import Ensemble
from .metrics import CONTINUE, EXIT
from .scorer import ScoringState, map_queries, rank_order, score_prefix

NUM_EXTRA = 4
PARTIAL, MINMAX, RANK, NCAND = range(NUM_EXTRA)


def extra_index(num_features: int, which: int) -> int:
    return num_features + which


@dataclass(frozen=True)
class ExitExample:
    features: np.ndarray
    label: int
    weight: float
    query_id: int
    doc_index: int


def label_documents(full_ranking, relevances, k: int = 15) -> np.ndarray:
    """Continue (1) iff the document is relevant and in the full ensemble's top-``k``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranking = np.asarray(full_ranking, dtype=np.int64)
    rel = np.asarray(relevances)
    in_top = np.zeros(len(rel), dtype=bool)
    in_top[ranking[:k]] = True
    return np.where(in_top & (rel >= 1), CONTINUE, EXIT).astype(np.int64)


def minmax_scores(partial: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(partial)), float(np.max(partial))
    if hi == lo:
        return np.full(len(partial), 0.5)
    return (partial - lo) / (hi - lo)


def augment_group(features: np.ndarray, state: ScoringState) -> np.ndarray:
    """Augmented matrix for every document of one query."""
    n = state.n_candidates
    extra = np.column_stack([
        state.partial_score,
        minmax_scores(state.partial_score),
        state.sentinel_rank.astype(np.float64),
        np.full(n, float(n)),
    ])
    return np.hstack([np.asarray(features, dtype=np.float64), extra])


def augment_features(doc: Document, state: ScoringState) -> np.ndarray:
    i = doc.doc_index
    partial = state.partial_score
    return np.concatenate([
        np.asarray(doc.features, dtype=np.float64),
        [partial[i], minmax_scores(partial)[i], float(state.sentinel_rank[i]),
         float(state.n_candidates)],
    ])


def compute_weight(relevance: int, label: int, query_label_counts: tuple[int, int], n: int) -> float:
    """``2**relevance / f`` where ``f`` is the share of the query's candidates carrying ``label``.

    ``query_label_counts`` is ``(n_continue, n_exit)``.
    """
    count = query_label_counts[0] if label == CONTINUE else query_label_counts[1]
    return 2.0 ** relevance / (count / n)


def group_examples(ens: Ensemble, group: QueryGroup, s: int, k: int) -> list[ExitExample]:
    full = ens.predict(group.features)
    labels = label_documents(rank_order(full), group.relevance, k)
    state = score_prefix(ens, group, s)
    X = augment_group(group.features, state)
    n = len(group)
    n_cont = int(labels.sum())
    counts = (n_cont, n - n_cont)
    return [
        ExitExample(X[i], int(labels[i]),
                    compute_weight(int(group.relevance[i]), int(labels[i]), counts, n),
                    group.query_id, i)
        for i in range(n)
    ]


def build_exit_training_set(ens: Ensemble, ds: Dataset, s: int, k: int = 15,
                            threads: int = 1) -> list[ExitExample]:
    per_query = map_queries(lambda g: group_examples(ens, g, s, k), ds.groups, threads)
    out = [ex for exs in per_query for ex in exs]
    out.sort(key=lambda ex: (ex.query_id, ex.doc_index))
    return out


def example_arrays(examples: list[ExitExample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.vstack([ex.features for ex in examples])
    y = np.array([ex.label for ex in examples], dtype=np.float64)
    w = np.array([ex.weight for ex in examples])
    return X, y, w


def write_examples(examples: list[ExitExample], path: str | os.PathLike) -> str:
    """LETOR dump (label 0/1) plus a ``.weight`` sidecar, one weight per line."""
    weight_path = f"{os.fspath(path)}.weight"
    with open(path, "w") as fh, open(weight_path, "w") as wfh:
        for ex in examples:
            fh.write(format_letor_line(ex.label, ex.query_id, ex.features) + "\n")
            wfh.write(f"{ex.weight!r}\n")
    return weight_path
