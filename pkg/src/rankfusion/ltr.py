"""Linear ranking scorer trained with a listwise softmax loss.

The scorer is ``sigmoid(W . x + b)`` over a fixed-length feature vector ``x``.
Training minimizes the softmax cross entropy between normalized labels and
the softmax of the candidate scores::

    loss = -sum_d (y_d / sum(y)) * log_softmax(s)_d

By default the loss sees the pre-activation scores ``s = W . x + b``;
``through_sigmoid=True`` feeds ``sigmoid(s)`` instead and back-propagates
through the sigmoid. Because the sigmoid is monotone, the ranking induced by
a scorer is the same either way.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rankfusion.errors import ParseError, RankFusionError, ValidationError
from rankfusion.lexical import BM25Params, InvertedIndex, QuerySpec, bm25_score


@dataclass
class LinearScorer:
    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ValidationError("scorer weights must be a finite 1-d vector and bias finite")

    @property
    def feature_dim(self) -> int:
        return len(self.weights)

    def to_json(self) -> str:
        return json.dumps({"feature_dim": self.feature_dim, "W": self.weights.tolist(), "bias": self.bias}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LinearScorer":
        try:
            obj = json.loads(text)
            scorer = cls(np.asarray(obj["W"], dtype=np.float64), float(obj["bias"]))
            dim = int(obj["feature_dim"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid scorer JSON: {exc}") from None
        if dim != scorer.feature_dim:
            raise ValidationError(f"feature_dim {dim} does not match {scorer.feature_dim} weights")
        return scorer


@dataclass
class Candidate:
    doc_id: str
    features: np.ndarray
    label: float = 0.0


@dataclass
class TrainingExample:
    """One topic's candidate list. ``no_negatives`` is set by
    :func:`sample_candidates` when there was nothing to sample."""

    topic: int
    candidates: list[Candidate]
    no_negatives: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not any(c.label > 0 for c in self.candidates):
            raise ValidationError(f"topic {self.topic}: training example needs a positive candidate")
        dims = {len(c.features) for c in self.candidates}
        if len(dims) != 1:
            raise ValidationError(f"topic {self.topic}: candidates have differing feature dims {sorted(dims)}")

    @property
    def feature_dim(self) -> int:
        return len(self.candidates[0].features)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([np.asarray(c.features, dtype=np.float64) for c in self.candidates])
        y = np.array([c.label for c in self.candidates], dtype=np.float64)
        return x, y


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _sigmoid_arr(z: np.ndarray) -> np.ndarray:
    return np.array([sigmoid(v) for v in z.tolist()], dtype=np.float64)


def _affine(x: np.ndarray, w: np.ndarray, bias: float) -> np.ndarray:
    # fixed left-to-right accumulation over features; no BLAS
    acc = np.zeros(x.shape[0], dtype=np.float64)
    for j in range(x.shape[1]):
        acc += x[:, j] * w[j]
    return acc + bias


def linear_score(scorer: LinearScorer, features: Sequence[float]) -> float:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (scorer.feature_dim,):
        raise ValidationError(f"expected {scorer.feature_dim} features, got {x.shape[0] if x.ndim else 0}")
    return sigmoid(float(_affine(x[None, :], scorer.weights, scorer.bias)[0]))


def _check_lists(scores, labels) -> tuple[np.ndarray, np.ndarray, float]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.ndim != 1 or s.shape != y.shape or len(s) == 0:
        raise ValueError("scores and labels must be equal-length non-empty lists")
    if np.any(y < 0):
        raise ValueError("labels must be non-negative")
    total = math.fsum(y.tolist())
    if total <= 0:
        raise ValueError("labels sum to zero; the loss is undefined")
    return s, y, total


def _log_softmax(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max()
    return shifted - math.log(math.fsum(math.exp(v) for v in shifted.tolist()))


def softmax_ranking_loss(scores: Sequence[float], labels: Sequence[float]) -> float:
    s, y, total = _check_lists(scores, labels)
    return -math.fsum(((y / total) * _log_softmax(s)).tolist())


def loss_gradient(scores: Sequence[float], labels: Sequence[float]) -> np.ndarray:
    """d loss / d scores = softmax(scores) - labels / sum(labels)."""
    s, y, total = _check_lists(scores, labels)
    probs = np.array([math.exp(v) for v in _log_softmax(s).tolist()], dtype=np.float64)
    return probs - y / total


def sample_candidates(
    example: TrainingExample, l: int, seed: int | np.random.Generator | None = 0
) -> TrainingExample:
    """One random positive plus up to ``l - 1`` random zero-label candidates."""
    if l < 2:
        raise ValueError("candidate list size l must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positives = [c for c in example.candidates if c.label > 0]
    negatives = [c for c in example.candidates if c.label == 0]
    pos = positives[int(rng.integers(len(positives)))]
    take = min(l - 1, len(negatives))
    picked = [negatives[i] for i in rng.choice(len(negatives), size=take, replace=False)] if take else []
    return TrainingExample(example.topic, [pos, *picked], no_negatives=not negatives)


def _list_loss_and_grad(
    scorer: LinearScorer, x: np.ndarray, y: np.ndarray, through_sigmoid: bool
) -> tuple[float, np.ndarray, float]:
    z = _affine(x, scorer.weights, scorer.bias)
    if through_sigmoid:
        act = _sigmoid_arr(z)
        g = loss_gradient(act, y) * act * (1.0 - act)
        loss = softmax_ranking_loss(act, y)
    else:
        g = loss_gradient(z, y)
        loss = softmax_ranking_loss(z, y)
    grad_w = np.zeros(x.shape[1], dtype=np.float64)
    for i in range(x.shape[0]):
        grad_w += x[i] * g[i]
    return loss, grad_w, math.fsum(g.tolist())


def ranking_loss(scorer: LinearScorer, examples: Sequence[TrainingExample], through_sigmoid: bool = False) -> float:
    """Mean softmax ranking loss over the full candidate lists."""
    if not examples:
        raise RankFusionError("no training examples")
    total = 0.0
    for ex in examples:
        x, y = ex.matrix()
        total += _list_loss_and_grad(scorer, x, y, through_sigmoid)[0]
    return total / len(examples)


def train_linear(
    examples: Sequence[TrainingExample],
    l: int = 12,
    steps: int = 500,
    learning_rate: float = 0.1,
    seed: int = 0,
    through_sigmoid: bool = False,
) -> LinearScorer:
    """Plain SGD from zero weights: one sampled example and candidate subset per step."""
    if not examples:
        raise RankFusionError("no training examples")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dims = {ex.feature_dim for ex in examples}
    if len(dims) != 1:
        raise ValidationError(f"examples have differing feature dims {sorted(dims)}")
    rng = np.random.default_rng(seed)
    scorer = LinearScorer(np.zeros(dims.pop()), 0.0)
    for _ in range(steps):
        ex = examples[int(rng.integers(len(examples)))]
        x, y = sample_candidates(ex, l, rng).matrix()
        _, grad_w, grad_b = _list_loss_and_grad(scorer, x, y, through_sigmoid)
        scorer.weights = scorer.weights - learning_rate * grad_w
        scorer.bias = scorer.bias - learning_rate * grad_b
    return scorer


FEATURE_NAMES = ("bm25", "query_coverage", "log_doc_len")


def lexical_features(
    index: InvertedIndex, query: QuerySpec, doc_ordinal: int, params: BM25Params = BM25Params()
) -> list[float]:
    """Hand-built features: BM25, fraction of distinct query terms present, log(1 + length)."""
    distinct = sorted(set(query.terms))
    matched = sum(1 for t in distinct if index.count(t, doc_ordinal) > 0)
    return [
        bm25_score(query, doc_ordinal, index, params),
        matched / len(distinct) if distinct else 0.0,
        math.log1p(float(index.doc_len[doc_ordinal])),
    ]


@dataclass
class FeatureRecord:
    topic: int
    doc_id: str
    features: list[float]
    label: float = 0.0


def parse_features(text: str) -> list[FeatureRecord]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = FeatureRecord(
                int(obj["topic"]), str(obj["doc_id"]), [float(v) for v in obj["features"]], float(obj.get("label", 0.0))
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid feature record: {exc}", lineno) from None
        out.append(rec)
    return out


def write_features(records: Sequence[FeatureRecord]) -> str:
    return "".join(
        json.dumps({"topic": r.topic, "doc_id": r.doc_id, "features": r.features, "label": r.label}) + "\n"
        for r in records
    )


def examples_from_features(records: Sequence[FeatureRecord]) -> list[TrainingExample]:
    """Group records by topic; topics without a positive label are skipped."""
    by_topic: dict[int, list[Candidate]] = defaultdict(list)
    for r in records:
        by_topic[r.topic].append(Candidate(r.doc_id, np.asarray(r.features, dtype=np.float64), r.label))
    return [
        TrainingExample(t, cands) for t, cands in sorted(by_topic.items()) if any(c.label > 0 for c in cands)
    ]


def score_table(scorer: LinearScorer, records: Sequence[FeatureRecord]) -> dict[int, dict[str, float]]:
    table: dict[int, dict[str, float]] = defaultdict(dict)
    for r in records:
        table[r.topic][r.doc_id] = linear_score(scorer, r.features)
    return dict(table)


def load_scorer(path: str | Path) -> LinearScorer:
    return LinearScorer.from_json(Path(path).read_text(encoding="utf-8"))
