"""LETOR / SVMLight dataset reading and writing, grouped by query."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

MAX_RELEVANCE = 4


class ParseError(ValueError):
    """Malformed LETOR input."""


@dataclass(frozen=True)
class Document:
    doc_index: int
    relevance: int
    features: np.ndarray


@dataclass(frozen=True)
class QueryGroup:
    """All candidates of one query, in file order.

    Features are stored as one ``(n, F)`` matrix; :attr:`documents` gives
    per-document views.
    """

    query_id: int
    features: np.ndarray
    relevance: np.ndarray

    def __post_init__(self):
        if len(self.relevance) == 0:
            raise ValueError(f"query {self.query_id} has no documents")
        if self.features.ndim != 2 or self.features.shape[0] != len(self.relevance):
            raise ValueError(f"query {self.query_id}: feature matrix shape mismatch")

    def __len__(self) -> int:
        return len(self.relevance)

    @property
    def documents(self) -> list[Document]:
        return [
            Document(i, int(r), self.features[i]) for i, r in enumerate(self.relevance)
        ]


@dataclass(frozen=True)
class Dataset:
    groups: tuple[QueryGroup, ...]
    num_features: int

    def __post_init__(self):
        seen = set()
        for g in self.groups:
            if g.query_id in seen:
                raise ValueError(f"duplicate query id {g.query_id}")
            seen.add(g.query_id)
            if g.features.shape[1] != self.num_features:
                raise ValueError(f"query {g.query_id}: expected {self.num_features} features")

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self) -> Iterator[QueryGroup]:
        return iter(self.groups)

    @property
    def num_documents(self) -> int:
        return sum(len(g) for g in self.groups)


def parse_letor_line(line: str) -> tuple[int, int, list[tuple[int, float]]]:
    """Parse ``<label> qid:<q> <idx>:<val> ... [# comment]``.

    Returns ``(label, qid, [(idx0, value), ...])`` with 0-based indices.
    """
    body = line.split("#", 1)[0].strip()
    if not body:
        raise ParseError(f"empty line: {line!r}")
    tokens = body.split()
    try:
        label = int(tokens[0])
    except ValueError:
        raise ParseError(f"non-integer label {tokens[0]!r} in line: {line!r}") from None
    if len(tokens) < 2 or not tokens[1].startswith("qid:"):
        raise ParseError(f"missing qid in line: {line!r}")
    try:
        qid = int(tokens[1][4:])
    except ValueError:
        raise ParseError(f"bad qid token {tokens[1]!r} in line: {line!r}") from None

    feats: list[tuple[int, float]] = []
    seen: set[int] = set()
    for tok in tokens[2:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            raise ParseError(f"malformed token {tok!r} in line: {line!r}")
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            raise ParseError(f"malformed token {tok!r} in line: {line!r}") from None
        if idx < 1:
            raise ParseError(f"feature index must be >= 1, got {idx} in line: {line!r}")
        if idx in seen:
            raise ParseError(f"duplicate feature index {idx} in line: {line!r}")
        seen.add(idx)
        feats.append((idx - 1, val))
    return label, qid, feats


def load_dataset(
    source: str | os.PathLike | Iterable[str],
    num_features: int | None = None,
    *,
    check_relevance: bool = True,
) -> Dataset:
    """Read a LETOR file (path or iterable of lines) into a :class:`Dataset`.

    Non-contiguous lines of the same qid are merged in first-appearance order.
    ``check_relevance=False`` admits arbitrary integer labels (e.g. the 0/1
    exit training dumps are still in range, but foreign files may not be).
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            return load_dataset(fh, num_features, check_relevance=check_relevance)

    rows: dict[int, list[tuple[int, list[tuple[int, float]]]]] = {}
    max_idx = -1
    for lineno, raw in enumerate(source, 1):
        if not raw.split("#", 1)[0].strip():
            continue
        try:
            label, qid, feats = parse_letor_line(raw)
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if check_relevance and not 0 <= label <= MAX_RELEVANCE:
            raise ParseError(f"line {lineno}: relevance {label} outside [0, {MAX_RELEVANCE}]")
        rows.setdefault(qid, []).append((label, feats))
        for idx, _ in feats:
            max_idx = max(max_idx, idx)

    if not rows:
        raise ParseError("empty dataset")
    observed = max_idx + 1
    if num_features is None:
        num_features = observed
    elif num_features < observed:
        raise ParseError(f"num_features={num_features} but feature index {observed} observed")

    groups = []
    for qid, docs in rows.items():
        X = np.zeros((len(docs), num_features))
        for i, (_, feats) in enumerate(docs):
            for idx, val in feats:
                X[i, idx] = val
        rel = np.array([lab for lab, _ in docs], dtype=np.int64)
        groups.append(QueryGroup(qid, X, rel))
    return Dataset(tuple(groups), num_features)


def format_letor_line(label: int, qid: int, features: np.ndarray) -> str:
    parts = [str(int(label)), f"qid:{qid}"]
    parts += [f"{i + 1}:{float(v)!r}" for i, v in enumerate(features) if v != 0.0 or np.signbit(v)]
    return " ".join(parts)


def dataset_lines(ds: Dataset) -> Iterator[str]:
    for g in ds.groups:
        for x, r in zip(g.features, g.relevance):
            yield format_letor_line(int(r), g.query_id, x)


def write_dataset(ds: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for line in dataset_lines(ds):
            fh.write(line + "\n")


def dataset_stats(ds: Dataset) -> tuple[int, int, float]:
    """``(num_queries, num_documents, mean_docs_per_query)``."""
    nq = len(ds.groups)
    nd = ds.num_documents
    return nq, nd, nd / nq if nq else 0.0
