"""TREC-style effectiveness metrics, residual filtering and report formatting.

Binary metrics treat grade >= 1 as relevant; nDCG uses linear gain
``grade / log2(rank + 1)``. Unjudged documents are non-relevant. A topic is
evaluated when it has at least one relevant judgment and at least one
retrieved document; other topics are excluded from the means.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from rankfusion.errors import RankFusionError
from rankfusion.trec import Qrels, Run

RELEVANT = 1


@dataclass(frozen=True)
class Cutoffs:
    ndcg: int = 20
    precision: int = 20
    recall: int = 1000

    def __post_init__(self):
        for name in ("ndcg", "precision", "recall"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} cutoff must be >= 1")

    def metric_names(self) -> list[str]:
        return [f"ndcg_cut_{self.ndcg}", f"P_{self.precision}", "map", f"recall_{self.recall}"]


@dataclass(frozen=True)
class EvalResult:
    metric: str
    per_topic: dict[int, float]
    mean: float
    excluded: int = field(default=0, compare=False)


def _ranked(run: Run, topic: int) -> list[str]:
    return run.docs(topic)


def _n_relevant(judged: dict[str, int]) -> int:
    return sum(1 for g in judged.values() if g >= RELEVANT)


def precision_at_k(run: Run, qrels: Qrels, k: int, topic: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    judged = qrels.for_topic(topic)
    hits = sum(1 for d in _ranked(run, topic)[:k] if judged.get(d, 0) >= RELEVANT)
    return hits / k


def recall_at_k(run: Run, qrels: Qrels, k: int, topic: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    judged = qrels.for_topic(topic)
    n_rel = _n_relevant(judged)
    if n_rel == 0:
        raise RankFusionError(f"topic {topic} has no relevant documents")
    hits = sum(1 for d in _ranked(run, topic)[:k] if judged.get(d, 0) >= RELEVANT)
    return hits / n_rel


def average_precision(run: Run, qrels: Qrels, topic: int) -> float:
    judged = qrels.for_topic(topic)
    n_rel = _n_relevant(judged)
    if n_rel == 0:
        raise RankFusionError(f"topic {topic} has no relevant documents")
    hits = 0
    total = 0.0
    for i, d in enumerate(_ranked(run, topic), 1):
        if judged.get(d, 0) >= RELEVANT:
            hits += 1
            total += hits / i
    return total / n_rel


def ndcg_at_k(run: Run, qrels: Qrels, k: int, topic: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    judged = qrels.for_topic(topic)
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, 1))
    if idcg == 0:
        raise RankFusionError(f"topic {topic} has no positively graded documents")
    dcg = sum(judged.get(d, 0) / math.log2(i + 1) for i, d in enumerate(_ranked(run, topic)[:k], 1))
    return dcg / idcg


def evaluable_topics(run: Run, qrels: Qrels) -> tuple[list[int], int]:
    """Topics that can be scored, plus how many run/qrels topics were left out."""
    with_rel = {t for t in qrels.topics if _n_relevant(qrels.for_topic(t)) > 0}
    in_run = {t for t, es in run.entries.items() if es}
    keep = sorted(with_rel & in_run)
    return keep, len((with_rel | in_run) - set(keep))


def evaluate(run: Run, qrels: Qrels, cutoffs: Cutoffs = Cutoffs()) -> list[EvalResult]:
    """nDCG@k, P@k, MAP and Recall@k over the evaluable topics."""
    topics, excluded = evaluable_topics(run, qrels)
    if not topics:
        raise RankFusionError("no evaluable topics (no topic has both retrieved and relevant documents)")
    fns = [
        lambda t: ndcg_at_k(run, qrels, cutoffs.ndcg, t),
        lambda t: precision_at_k(run, qrels, cutoffs.precision, t),
        lambda t: average_precision(run, qrels, t),
        lambda t: recall_at_k(run, qrels, cutoffs.recall, t),
    ]
    results = []
    for name, fn in zip(cutoffs.metric_names(), fns):
        per_topic = {t: fn(t) for t in topics}
        results.append(EvalResult(name, per_topic, math.fsum(per_topic.values()) / len(per_topic), excluded))
    return results


def residual_filter(run: Run, prior_qrels: Qrels) -> Run:
    """Drop every document judged (any grade) for the same topic in ``prior_qrels``."""
    out = {}
    for topic, entries in run.entries.items():
        judged = prior_qrels.for_topic(topic)
        kept = [(e.doc_id, e.score) for e in entries if e.doc_id not in judged]
        out[topic] = kept
    return Run.from_ranked(run.tag, out)


def residual_qrels(qrels: Qrels, prior_qrels: Qrels) -> Qrels:
    """Judgments for documents not already judged (same topic) in ``prior_qrels``."""
    return Qrels({key: g for key, g in qrels.judgments.items() if key not in prior_qrels.judgments})


def evaluate_residual(run: Run, qrels: Qrels, prior_qrels: Qrels, cutoffs: Cutoffs = Cutoffs()) -> list[EvalResult]:
    """Residual collection evaluation: prior-judged documents leave both the run and the judgments."""
    return evaluate(residual_filter(run, prior_qrels), residual_qrels(qrels, prior_qrels), cutoffs)


def format_report(results: Sequence[EvalResult]) -> str:
    """Tab separated ``metric topic value`` lines, then ``metric all mean``."""
    lines = []
    for r in results:
        for t in sorted(r.per_topic):
            lines.append(f"{r.metric}\t{t}\t{r.per_topic[t]:.4f}\n")
    for r in results:
        lines.append(f"{r.metric}\tall\t{r.mean:.4f}\n")
    return "".join(lines)


def report_json(results: Sequence[EvalResult]) -> str:
    payload = {
        r.metric: {"mean": r.mean, "per_topic": {str(t): v for t, v in sorted(r.per_topic.items())}}
        for r in results
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
