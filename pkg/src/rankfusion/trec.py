"""Readers and writers for topics XML, TREC run/qrels files and JSONL corpora.

Run file lines are ``topic Q0 doc_id rank score tag``; qrels lines are
``topic iteration doc_id grade``. Parsers raise :class:`ParseError` for
malformed text and :class:`ValidationError` for broken invariants, always with
enough context (line, topic, id) to find the offending input.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from rankfusion.errors import ParseError, ValidationError

TOPIC_FIELDS = ("query", "question", "narrative")


@dataclass(frozen=True)
class Topic:
    number: int
    query: str
    question: str = ""
    narrative: str = ""

    def field(self, name: str) -> str:
        if name not in TOPIC_FIELDS:
            raise KeyError(f"unknown topic field {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class Doc:
    doc_id: str
    title: str = ""
    abstract: str = ""
    full_text: str = ""


class RunEntry(NamedTuple):
    doc_id: str
    rank: int
    score: float


@dataclass(frozen=True)
class Run:
    """A ranked result list per topic.

    ``entries`` maps a topic number to its entries in rank order. Ranks are
    1..n, doc ids unique and scores non-increasing; the constructor checks this.
    """

    tag: str
    entries: Mapping[int, tuple[RunEntry, ...]]

    def __post_init__(self):
        for topic, ranked in self.entries.items():
            _check_ranked(topic, ranked)

    @classmethod
    def from_ranked(cls, tag: str, ranked: Mapping[int, Iterable[tuple[str, float]]]) -> "Run":
        """Build a run from already ordered ``(doc_id, score)`` lists."""
        return cls(
            tag,
            {
                topic: tuple(RunEntry(doc, i, float(score)) for i, (doc, score) in enumerate(items, 1))
                for topic, items in ranked.items()
            },
        )

    @classmethod
    def from_scores(cls, tag: str, scores: Mapping[int, Mapping[str, float]]) -> "Run":
        """Sort each topic by score descending, ties by ascending doc id."""
        return cls.from_ranked(
            tag,
            {t: sorted(s.items(), key=lambda kv: (-kv[1], kv[0])) for t, s in scores.items()},
        )

    @property
    def topics(self) -> list[int]:
        return sorted(self.entries)

    def docs(self, topic: int) -> list[str]:
        return [e.doc_id for e in self.entries.get(topic, ())]

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())


def _check_ranked(topic: int, ranked: Sequence[RunEntry]) -> None:
    seen: set[str] = set()
    prev = math.inf
    for i, e in enumerate(ranked, 1):
        if e.rank != i:
            raise ValidationError(f"topic {topic}: rank gap (expected rank {i}, got {e.rank})")
        if e.doc_id in seen:
            raise ValidationError(f"topic {topic}: duplicate doc_id {e.doc_id!r}")
        if e.score > prev:
            raise ValidationError(f"topic {topic}: score increases at rank {e.rank}")
        seen.add(e.doc_id)
        prev = e.score


@dataclass(frozen=True)
class Qrels:
    """Graded judgments keyed by ``(topic, doc_id)``.

    ``dropped`` counts negative-grade lines discarded at parse time and
    ``duplicates`` counts keys that were judged more than once.
    """

    judgments: Mapping[tuple[int, str], int]
    dropped: int = field(default=0, compare=False)
    duplicates: int = field(default=0, compare=False)

    def for_topic(self, topic: int) -> dict[str, int]:
        return self._by_topic.get(topic, {})

    @property
    def topics(self) -> list[int]:
        return sorted(self._by_topic)

    @property
    def _by_topic(self) -> dict[int, dict[str, int]]:
        cached = self.__dict__.get("_by_topic_cache")
        if cached is None:
            cached = defaultdict(dict)
            for (topic, doc), grade in self.judgments.items():
                cached[topic][doc] = grade
            cached = dict(cached)
            object.__setattr__(self, "_by_topic_cache", cached)
        return cached

    def __len__(self) -> int:
        return len(self.judgments)


def _norm_ws(text: str | None) -> str:
    return " ".join(text.split()) if text else ""


def parse_topics(xml_text: str) -> list[Topic]:
    """Parse a ``<topics>`` document into :class:`Topic` values, in file order."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise ParseError(f"malformed topics XML: {exc.msg}", exc.position[0]) from None
    if root.tag != "topics":
        raise ParseError(f"expected <topics> root element, found <{root.tag}>")
    topics: list[Topic] = []
    seen: set[int] = set()
    for i, elem in enumerate(root.findall("topic"), 1):
        raw = elem.get("number")
        if raw is None:
            raise ParseError(f"<topic> element #{i} has no number attribute")
        try:
            number = int(raw.strip())
        except ValueError:
            raise ParseError(f"<topic> element #{i} has non-integer number {raw!r}") from None
        if number <= 0:
            raise ParseError(f"<topic number={raw!r}> is not a positive integer")
        if number in seen:
            raise ValidationError(f"duplicate topic number {number}")
        seen.add(number)
        fields = {}
        for name in TOPIC_FIELDS:
            child = elem.find(name)
            fields[name] = _norm_ws("".join(child.itertext())) if child is not None else ""
        if not fields["query"]:
            raise ValidationError(f"topic {number} has an empty query")
        topics.append(Topic(number, **fields))
    return topics


def load_topics(path: str | Path) -> list[Topic]:
    return parse_topics(Path(path).read_text(encoding="utf-8"))


def parse_run(text: str) -> Run:
    """Parse TREC run text; the tag is taken from the first line."""
    rows: dict[int, list[tuple[int, int, str, float]]] = defaultdict(list)
    tag = None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise ParseError(f"expected 6 columns, found {len(parts)}", lineno)
        topic_s, _, doc_id, rank_s, score_s, line_tag = parts
        try:
            topic = int(topic_s)
            rank = int(rank_s)
            score = float(score_s)
        except ValueError:
            raise ParseError(f"non-numeric topic, rank or score in {line.strip()!r}", lineno) from None
        if not math.isfinite(score):
            raise ParseError(f"non-finite score {score_s!r}", lineno)
        if tag is None:
            tag = line_tag
        rows[topic].append((rank, lineno, doc_id, score))

    entries: dict[int, tuple[RunEntry, ...]] = {}
    for topic, items in rows.items():
        items.sort()
        seen: dict[str, int] = {}
        prev_score = math.inf
        for expected, (rank, lineno, doc_id, score) in enumerate(items, 1):
            if rank != expected:
                what = "duplicate rank" if rank < expected else "rank gap"
                raise ValidationError(f"topic {topic}, line {lineno}: {what} (expected rank {expected}, got {rank})")
            if doc_id in seen:
                raise ValidationError(
                    f"topic {topic}, line {lineno}: duplicate doc_id {doc_id!r} (first at line {seen[doc_id]})"
                )
            if score > prev_score:
                raise ValidationError(f"topic {topic}, line {lineno}: score increases with rank (non-monotone scores)")
            seen[doc_id] = lineno
            prev_score = score
        entries[topic] = tuple(RunEntry(doc, rank, score) for rank, _, doc, score in items)
    return Run(tag or "", entries)


def read_run(path: str | Path) -> Run:
    return parse_run(Path(path).read_text(encoding="utf-8"))


def write_run(run: Run) -> str:
    """Serialize to TREC format: topics ascending, rank order, 6 significant digits."""
    if run.entries and (not run.tag or any(c.isspace() for c in run.tag)):
        raise ValidationError(f"run tag must be a non-empty token, got {run.tag!r}")
    lines = []
    for topic in sorted(run.entries):
        for e in run.entries[topic]:
            lines.append(f"{topic} Q0 {e.doc_id} {e.rank} {e.score:.6g} {run.tag}\n")
    return "".join(lines)


def save_run(run: Run, path: str | Path) -> None:
    Path(path).write_text(write_run(run), encoding="ascii")


def parse_qrels(text: str) -> Qrels:
    judgments: dict[tuple[int, str], int] = {}
    dropped = duplicates = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ParseError(f"expected 4 columns, found {len(parts)}", lineno)
        try:
            topic, grade = int(parts[0]), int(parts[3])
        except ValueError:
            raise ParseError(f"non-integer topic or grade in {line.strip()!r}", lineno) from None
        key = (topic, parts[2])
        if key in judgments:
            duplicates += 1
        if grade < 0:
            dropped += 1
            judgments.pop(key, None)
            continue
        judgments[key] = grade
    return Qrels(judgments, dropped, duplicates)


def read_qrels(path: str | Path) -> Qrels:
    return parse_qrels(Path(path).read_text(encoding="utf-8"))


def write_qrels(qrels: Qrels) -> str:
    """Canonical qrels text: sorted by topic then doc id, iteration column 0."""
    return "".join(f"{t} 0 {d} {g}\n" for (t, d), g in sorted(qrels.judgments.items()))


def load_corpus(jsonl_text: str) -> list[Doc]:
    docs: list[Doc] = []
    seen: set[str] = set()
    for lineno, line in enumerate(jsonl_text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(obj, dict) or "doc_id" not in obj:
            raise ParseError("record has no doc_id", lineno)
        doc_id = str(obj["doc_id"])
        if not doc_id or any(c.isspace() for c in doc_id):
            raise ParseError(f"doc_id {doc_id!r} is empty or contains whitespace", lineno)
        if doc_id in seen:
            raise ValidationError(f"duplicate doc_id {doc_id!r} at line {lineno}")
        seen.add(doc_id)
        doc = Doc(
            doc_id,
            str(obj.get("title") or ""),
            str(obj.get("abstract") or ""),
            str(obj.get("full_text") or ""),
        )
        if not doc.abstract and not doc.full_text:
            raise ValidationError(f"doc {doc_id!r} at line {lineno} has neither abstract nor full_text")
        docs.append(doc)
    return docs


def read_corpus(path: str | Path) -> list[Doc]:
    return load_corpus(Path(path).read_text(encoding="utf-8"))
