"""Exact dense retrieval over precomputed embeddings and the hybrid
``lambda * <q_nn, d_nn> + BM25(q, d)`` similarity.

Vector files are plain text, one record per line::

    doc:d1 3 0.1 0.2 0.3
    topic:49 3 0.0 1.0 0.0

Dot products are summed left to right over dimensions (never through BLAS),
so scores do not depend on the machine's linear algebra library.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from rankfusion import kernels
from rankfusion.errors import ParseError, RankFusionError, ValidationError
from rankfusion.lexical import BM25Params, InvertedIndex, QuerySpec, bm25_score, make_query, score_all
from rankfusion.trec import Run, Topic

log = logging.getLogger(__name__)

LAMBDA_GRID = (1.0, 5.0, 10.0, 15.0, 20.0, 30.0)


@dataclass(eq=False)
class DenseStore:
    dim: int
    doc_ids: tuple[str, ...]  # ascending
    doc_matrix: np.ndarray  # (len(doc_ids), dim), C-contiguous float64
    topic_vectors: dict[int, np.ndarray]

    @cached_property
    def _rows(self) -> dict[str, int]:
        return {d: i for i, d in enumerate(self.doc_ids)}

    @property
    def doc_vectors(self) -> dict[str, np.ndarray]:
        return {d: self.doc_matrix[i] for d, i in self._rows.items()}

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self._rows

    def row(self, doc_id: str) -> int:
        return self._rows[doc_id]

    def topic_vector(self, topic_number: int) -> np.ndarray:
        try:
            return self.topic_vectors[topic_number]
        except KeyError:
            raise RankFusionError(f"no vector for topic {topic_number}") from None


@dataclass(frozen=True)
class HybridParams:
    lam: float = 1.0
    bm25: BM25Params = field(default_factory=BM25Params)

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be a non-negative finite number, got {self.lam}")


def parse_vectors(text: str) -> DenseStore:
    docs: dict[str, np.ndarray] = {}
    topics: dict[int, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        rec_id = parts[0]
        if len(parts) < 2:
            raise ParseError(f"record {rec_id!r} has no dimension field", lineno)
        try:
            rec_dim = int(parts[1])
            values = np.array([float(v) for v in parts[2:]], dtype=np.float64)
        except ValueError:
            raise ParseError(f"record {rec_id!r} has a non-numeric dimension or component", lineno) from None
        if rec_dim < 1 or len(values) != rec_dim:
            raise ParseError(f"record {rec_id!r} declares dim {parts[1]} but has {len(values)} components", lineno)
        if dim is None:
            dim = rec_dim
        elif rec_dim != dim:
            raise ValidationError(f"dimension mismatch for {rec_id!r}: expected {dim}, got {rec_dim} (line {lineno})")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"non-finite component in {rec_id!r} (line {lineno})")
        kind, _, key = rec_id.partition(":")
        if kind == "doc" and key:
            table, k = docs, key
        elif kind == "topic" and key:
            try:
                k = int(key)
            except ValueError:
                raise ParseError(f"topic id {key!r} is not an integer", lineno) from None
            table = topics
        else:
            raise ParseError(f"record id {rec_id!r} must start with 'doc:' or 'topic:'", lineno)
        if k in table:
            if not np.array_equal(table[k], values):
                raise ValidationError(f"conflicting duplicate record {rec_id!r} (line {lineno})")
            continue
        table[k] = values
    if dim is None:
        raise RankFusionError("no vectors")
    doc_ids = tuple(sorted(docs))
    matrix = np.ascontiguousarray(
        np.stack([docs[d] for d in doc_ids]) if doc_ids else np.zeros((0, dim)), dtype=np.float64
    )
    return DenseStore(dim, doc_ids, matrix, topics)


def load_vectors(path: str | Path) -> DenseStore:
    return parse_vectors(Path(path).read_text(encoding="utf-8"))


def dense_scores(store: DenseStore, topic_number: int) -> np.ndarray:
    q = np.ascontiguousarray(store.topic_vector(topic_number), dtype=np.float64)
    return kernels.dense_dot(store.doc_matrix, q)


def dense_search(store: DenseStore, topic_number: int, depth: int = 1000) -> list[tuple[str, float]]:
    """Exact top-``depth`` documents by dot product, ties by ascending doc id."""
    scores = dense_scores(store, topic_number)
    order = np.lexsort((np.arange(len(scores)), -scores))[:depth]
    return [(store.doc_ids[i], float(scores[i])) for i in order]


def hybrid_score(
    topic_number: int,
    doc_id: str,
    store: DenseStore,
    index: InvertedIndex,
    query: QuerySpec,
    params: HybridParams = HybridParams(),
) -> float:
    if not store.has_doc(doc_id):
        raise RankFusionError(f"doc {doc_id!r} is missing from the dense store")
    if not index.has_doc(doc_id):
        raise RankFusionError(f"doc {doc_id!r} is missing from the lexical index")
    q = np.ascontiguousarray(store.topic_vector(topic_number), dtype=np.float64)
    row = store.doc_matrix[store.row(doc_id) : store.row(doc_id) + 1]
    dot = float(kernels.dense_dot(row, q)[0])
    return params.lam * dot + bm25_score(query, index.ordinal(doc_id), index, params.bm25)


def coverage(store: DenseStore, index: InvertedIndex) -> tuple[list[str], list[str]]:
    """Doc ids present only in the store, and only in the index."""
    in_index = set(index.doc_ids)
    in_store = set(store.doc_ids)
    return sorted(in_store - in_index), sorted(in_index - in_store)


def hybrid_search(
    store: DenseStore,
    index: InvertedIndex,
    topic: Topic,
    fields: Iterable[str],
    params: HybridParams = HybridParams(),
    depth: int = 1000,
    query: QuerySpec | None = None,
) -> list[tuple[str, float]]:
    """Rank documents covered by both the store and the index by hybrid score.

    Documents with a hybrid score of exactly zero are dropped.
    """
    if query is None:
        query = make_query(topic, fields)
    dense = dense_scores(store, topic.number)
    bm25 = score_all(index, query, params.bm25)
    common = [d for d in store.doc_ids if index.has_doc(d)]  # ascending doc id
    rows = np.fromiter((store.row(d) for d in common), dtype=np.int64, count=len(common))
    ords = np.fromiter((index.ordinal(d) for d in common), dtype=np.int64, count=len(common))
    hybrid = params.lam * dense[rows] + bm25[ords]
    keep = np.flatnonzero(hybrid != 0)
    order = keep[np.lexsort((keep, -hybrid[keep]))][:depth]
    return [(common[i], float(hybrid[i])) for i in order]


def dense_retrieve(store: DenseStore, topic_numbers: Sequence[int], depth: int = 1000, tag: str = "dense") -> Run:
    return Run.from_ranked(tag, {t: dense_search(store, t, depth) for t in topic_numbers})


def hybrid_retrieve(
    store: DenseStore,
    index: InvertedIndex,
    topics: Sequence[Topic],
    fields: Iterable[str],
    params: HybridParams = HybridParams(),
    depth: int = 1000,
    tag: str = "hybrid",
) -> Run:
    store_only, index_only = coverage(store, index)
    if store_only or index_only:
        log.warning(
            "hybrid retrieval skips %d docs without index entry and %d docs without vector",
            len(store_only),
            len(index_only),
        )
    fields = tuple(fields)
    return Run.from_ranked(tag, {t.number: hybrid_search(store, index, t, fields, params, depth) for t in topics})
