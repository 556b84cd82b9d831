"""Inverted index, BM25 scoring and query expansion.

BM25 is treated as a sparse dot product between a query vector (term
multiplicity times term weight) and a document vector whose component for
term ``t`` is::

    idf(t) * cnt * (k + 1) / (cnt + k * (1 - b + b * m / m_avg))

with ``idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))``. Both the single-document
path (:func:`bm25_score`) and the batch path (:func:`search`) add query terms
in sorted order with identical arithmetic, so they agree to the last bit.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from rankfusion import kernels
from rankfusion.errors import RankFusionError, ValidationError
from rankfusion.text import analyze
from rankfusion.trec import TOPIC_FIELDS, Doc, Qrels, Run, Topic

log = logging.getLogger(__name__)

FIELD_SOURCES = ("abstract", "full_text")


@dataclass(frozen=True)
class BM25Params:
    k: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ValueError(f"BM25 k must be a non-negative finite number, got {self.k}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"BM25 b must lie in [0, 1], got {self.b}")


class Postings(NamedTuple):
    docs: np.ndarray  # int32 doc ordinals, ascending
    counts: np.ndarray  # int32 term counts


@dataclass(eq=False)
class InvertedIndex:
    doc_ids: tuple[str, ...]
    doc_len: np.ndarray
    postings: dict[str, Postings]
    field_source: str
    avg_doc_len: float

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @cached_property
    def doc_freq(self) -> dict[str, int]:
        return {t: len(p.docs) for t, p in self.postings.items()}

    @cached_property
    def _ordinals(self) -> dict[str, int]:
        return {d: i for i, d in enumerate(self.doc_ids)}

    @cached_property
    def doc_id_rank(self) -> np.ndarray:
        """Position of each ordinal in ascending doc-id order (tie-break key)."""
        order = sorted(range(self.n_docs), key=self.doc_ids.__getitem__)
        rank = np.empty(self.n_docs, dtype=np.int64)
        rank[order] = np.arange(self.n_docs)
        return rank

    @cached_property
    def collection_counts(self) -> dict[str, int]:
        return {t: int(p.counts.sum()) for t, p in self.postings.items()}

    @cached_property
    def total_tokens(self) -> int:
        return int(self.doc_len.sum())

    @cached_property
    def _forward(self) -> list[dict[str, int]]:
        fwd: list[dict[str, int]] = [{} for _ in range(self.n_docs)]
        for term in sorted(self.postings):
            p = self.postings[term]
            for d, c in zip(p.docs.tolist(), p.counts.tolist()):
                fwd[d][term] = c
        return fwd

    def ordinal(self, doc_id: str) -> int:
        try:
            return self._ordinals[doc_id]
        except KeyError:
            raise RankFusionError(f"doc {doc_id!r} is not in the index") from None

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self._ordinals

    def doc_terms(self, ordinal: int) -> dict[str, int]:
        return self._forward[ordinal]

    def count(self, term: str, ordinal: int) -> int:
        p = self.postings.get(term)
        if p is None:
            return 0
        i = int(np.searchsorted(p.docs, ordinal))
        return int(p.counts[i]) if i < len(p.docs) and p.docs[i] == ordinal else 0

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


@dataclass(frozen=True)
class QuerySpec:
    """A bag of analyzed terms with optional per-term weights (default 1.0).

    Repeated terms count once per occurrence. ``feedback_docs`` lists the
    documents an expansion drew terms from; it is empty when no feedback was
    applied, which is how a failed relevance-feedback expansion is flagged.
    """

    terms: tuple[str, ...]
    weights: Mapping[str, float] = field(default_factory=dict)
    feedback_docs: tuple[str, ...] = ()

    def __post_init__(self):
        present = set(self.terms)
        for term, w in self.weights.items():
            if term not in present:
                raise ValidationError(f"weighted term {term!r} does not occur in the query")
            if not (w > 0 and math.isfinite(w)):
                raise ValidationError(f"weight of {term!r} must be positive and finite, got {w}")

    def weight(self, term: str) -> float:
        return self.weights.get(term, 1.0)

    def vector(self) -> dict[str, float]:
        """Sparse query vector, terms in sorted order."""
        counts = Counter(self.terms)
        return {t: counts[t] * self.weight(t) for t in sorted(counts)}


def build_index(corpus: Sequence[Doc], field_source: str = "abstract") -> InvertedIndex:
    if field_source not in FIELD_SOURCES:
        raise ValueError(f"field_source must be one of {FIELD_SOURCES}, got {field_source!r}")
    if not corpus:
        raise RankFusionError("cannot index an empty corpus (average document length undefined)")
    seen: set[str] = set()
    raw: dict[str, tuple[list[int], list[int]]] = {}
    doc_len = np.zeros(len(corpus), dtype=np.int64)
    for ordinal, doc in enumerate(corpus):
        if doc.doc_id in seen:
            raise ValidationError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        tokens = analyze(getattr(doc, field_source))
        doc_len[ordinal] = len(tokens)
        for term, cnt in Counter(tokens).items():
            docs, counts = raw.setdefault(term, ([], []))
            docs.append(ordinal)
            counts.append(cnt)
    postings = {
        t: Postings(np.asarray(d, dtype=np.int32), np.asarray(c, dtype=np.int32))
        for t, (d, c) in sorted(raw.items())
    }
    return InvertedIndex(
        doc_ids=tuple(d.doc_id for d in corpus),
        doc_len=doc_len,
        postings=postings,
        field_source=field_source,
        avg_doc_len=float(doc_len.sum()) / len(corpus),
    )


def _tf_weight(cnt: int, m: int, avg: float, idf: float, params: BM25Params) -> float:
    k, b = params.k, params.b
    norm = 1.0 + b * (float(m) / avg - 1.0)
    return idf * (float(cnt) * (k + 1.0) / (float(cnt) + k * norm))


def bm25_term_weight(term: str, doc_ordinal: int, index: InvertedIndex, params: BM25Params = BM25Params()) -> float:
    if not 0 <= doc_ordinal < index.n_docs:
        raise RankFusionError(f"doc ordinal {doc_ordinal} out of range [0, {index.n_docs})")
    cnt = index.count(term, doc_ordinal)
    if cnt == 0:
        return 0.0
    return _tf_weight(cnt, int(index.doc_len[doc_ordinal]), index.avg_doc_len, index.idf(term), params)


def bm25_score(query: QuerySpec, doc_ordinal: int, index: InvertedIndex, params: BM25Params = BM25Params()) -> float:
    if not 0 <= doc_ordinal < index.n_docs:
        raise RankFusionError(f"doc ordinal {doc_ordinal} out of range [0, {index.n_docs})")
    score = 0.0
    for term, qv in query.vector().items():
        w = bm25_term_weight(term, doc_ordinal, index, params)
        if w:
            score += qv * w
    return score


def score_all(index: InvertedIndex, query: QuerySpec, params: BM25Params = BM25Params()) -> np.ndarray:
    """BM25 score of every document, accumulated term at a time."""
    acc = np.zeros(index.n_docs, dtype=np.float64)
    for term, qv in query.vector().items():
        p = index.postings.get(term)
        if p is None:
            continue
        kernels.bm25_accumulate(
            acc, p.docs, p.counts, index.doc_len, index.avg_doc_len, index.idf(term), qv, params.k, params.b
        )
    return acc


def rank_scores(scores: np.ndarray, tie_rank: np.ndarray, candidates: np.ndarray, depth: int) -> np.ndarray:
    """Candidates ordered by score descending then by ``tie_rank``, cut to ``depth``."""
    order = np.lexsort((tie_rank[candidates], -scores[candidates]))
    return candidates[order[:depth]]


def search(
    index: InvertedIndex, query: QuerySpec, params: BM25Params = BM25Params(), depth: int = 1000
) -> list[tuple[str, float]]:
    """Top ``depth`` documents by BM25; zero-score documents are left out."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    scores = score_all(index, query, params)
    top = rank_scores(scores, index.doc_id_rank, np.flatnonzero(scores > 0), depth)
    return [(index.doc_ids[i], float(scores[i])) for i in top]


def make_query(topic: Topic, combo: Iterable[str]) -> QuerySpec:
    """Concatenate the chosen topic fields (always in query, question, narrative order)."""
    chosen = set(combo)
    unknown = chosen - set(TOPIC_FIELDS)
    if unknown:
        raise ValueError(f"unknown topic fields: {sorted(unknown)}")
    if not chosen:
        raise ValueError("at least one topic field is required")
    texts = [topic.field(f) for f in TOPIC_FIELDS if f in chosen]
    if not any(texts):
        raise RankFusionError(f"topic {topic.number}: all selected fields {sorted(chosen)} are empty")
    return QuerySpec(tuple(analyze(" ".join(texts))))


def term_informativeness(feedback_counts: Mapping[str, int], feedback_len: int, index: InvertedIndex) -> dict[str, float]:
    """KL contribution p_F * ln(p_F / p_C) of each feedback term."""
    total = index.total_tokens
    out = {}
    for term, c in feedback_counts.items():
        p_f = c / feedback_len
        p_c = index.collection_counts[term] / total
        out[term] = p_f * math.log(p_f / p_c)
    return out


def _expand(index: InvertedIndex, query: QuerySpec, feedback: Sequence[int], n_terms: int) -> QuerySpec:
    fb_counts: Counter[str] = Counter()
    for d in feedback:
        fb_counts.update(index.doc_terms(d))
    fb_len = int(sum(int(index.doc_len[d]) for d in feedback))
    fb_ids = tuple(index.doc_ids[d] for d in feedback)
    if fb_len == 0:
        return QuerySpec(query.terms, dict(query.weights), fb_ids)
    present = set(query.terms)
    scores = term_informativeness({t: c for t, c in fb_counts.items() if t not in present}, fb_len, index)
    picked = sorted(((s, t) for t, s in scores.items() if s > 0), key=lambda st: (-st[0], st[1]))[:n_terms]
    weights = dict(query.weights)
    if picked:
        top = picked[0][0]
        for s, t in picked:
            weights[t] = s / top
    return QuerySpec(query.terms + tuple(t for _, t in picked), weights, fb_ids)


def pseudo_feedback_expand(
    index: InvertedIndex,
    query: QuerySpec,
    params: BM25Params = BM25Params(),
    n_docs: int = 10,
    n_terms: int = 10,
) -> QuerySpec:
    """Add the ``n_terms`` most informative terms of the top ``n_docs`` results.

    Added terms carry weight ``score / max_score`` in (0, 1]; original terms
    keep their weights.
    """
    if n_docs < 1 or n_terms < 1:
        raise ValueError("n_docs and n_terms must be >= 1")
    top = search(index, query, params, n_docs)
    if not top:
        return query
    return _expand(index, query, [index.ordinal(d) for d, _ in top], n_terms)


def relevance_feedback_expand(
    index: InvertedIndex,
    query: QuerySpec,
    params: BM25Params,
    qrels: Qrels,
    topic_number: int,
    n_docs: int = 10,
    n_terms: int = 300,
) -> QuerySpec:
    """Like :func:`pseudo_feedback_expand`, but feedback comes from the
    ``n_docs`` highest-ranked retrieved documents judged relevant (grade >= 1).

    Without any such document the query is returned unchanged with empty
    ``feedback_docs``.
    """
    if n_docs < 1 or n_terms < 1:
        raise ValueError("n_docs and n_terms must be >= 1")
    judged = qrels.for_topic(topic_number)
    ranked = search(index, query, params, index.n_docs)
    relevant = [index.ordinal(d) for d, _ in ranked if judged.get(d, 0) >= 1][:n_docs]
    if not relevant:
        log.warning("topic %s: no judged-relevant document retrieved; query left unexpanded", topic_number)
        return query
    return _expand(index, query, relevant, n_terms)


@dataclass(frozen=True)
class Expansion:
    """Expansion settings for :func:`retrieve`: ``kind`` is ``pseudo`` or ``rf``."""

    kind: str
    n_docs: int
    n_terms: int

    @classmethod
    def parse(cls, spec: str) -> "Expansion":
        """Parse ``pseudo:10,10`` or ``rf:10,300`` (docs, terms)."""
        try:
            kind, rest = spec.split(":")
            n_docs, n_terms = (int(x) for x in rest.split(","))
        except ValueError:
            raise ValueError(f"expansion must look like 'pseudo:DOCS,TERMS' or 'rf:DOCS,TERMS', got {spec!r}") from None
        if kind not in ("pseudo", "rf"):
            raise ValueError(f"unknown expansion kind {kind!r}")
        if n_docs < 1 or n_terms < 1:
            raise ValueError("expansion docs and terms must be >= 1")
        return cls(kind, n_docs, n_terms)


def retrieve(
    index: InvertedIndex,
    topics: Sequence[Topic],
    fields: Iterable[str],
    params: BM25Params = BM25Params(),
    depth: int = 1000,
    tag: str = "bm25",
    expansion: Expansion | None = None,
    qrels: Qrels | None = None,
) -> Run:
    """One BM25 run over all topics."""
    fields = tuple(fields)
    if expansion is not None and expansion.kind == "rf" and qrels is None:
        raise ValueError("relevance feedback needs qrels")
    ranked = {}
    for topic in topics:
        query = make_query(topic, fields)
        if expansion is not None:
            if expansion.kind == "pseudo":
                query = pseudo_feedback_expand(index, query, params, expansion.n_docs, expansion.n_terms)
            else:
                query = relevance_feedback_expand(
                    index, query, params, qrels, topic.number, expansion.n_docs, expansion.n_terms
                )
        ranked[topic.number] = search(index, query, params, depth)
    return Run.from_ranked(tag, ranked)
