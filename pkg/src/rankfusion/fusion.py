"""Reciprocal rank fusion: flat, per-pool, hierarchical and weighted hierarchical.

Flat RRF scores a document by ``sum_r 1 / (k + rank_r(d))`` over the runs that
contain it. Hierarchical RRF first fuses each system's pool of runs into one
run, then fuses those per-pool runs, so a system with many runs cannot drown
out the others. The weighted variant multiplies each pool's contribution by
its weight ``w_S``.

Per document, contributions are summed in ascending order of value. The fused
score is therefore independent of the order in which runs or pools are given,
and ties are broken by ascending doc id.
"""

from __future__ import annotations

import glob
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from rankfusion import kernels
from rankfusion.errors import RankFusionError, ValidationError
from rankfusion.trec import Run, RunEntry, read_run

RRF_K = 60.0
RELEVANCE_WEIGHT = 2.0


@dataclass(frozen=True)
class FusionParams:
    k: float = RRF_K

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"RRF k must be positive, got {self.k}")


@dataclass(frozen=True)
class RunPool:
    """The runs of one system, fused together before cross-system fusion."""

    system_name: str
    runs: tuple[Run, ...]
    weight: float = 1.0
    uses_relevance_judgments: bool = False

    def __post_init__(self):
        if not self.runs:
            raise ValidationError(f"pool {self.system_name!r} has no runs")
        object.__setattr__(self, "runs", tuple(self.runs))


def _fuse(weighted_runs: Sequence[tuple[Run, float]], k: float, tag: str, depth: int | None) -> Run:
    topics = sorted({t for run, _ in weighted_runs for t in run.entries})
    fused: dict[int, tuple[RunEntry, ...]] = {}
    for topic in topics:
        doc_ids: list[str] = []
        ranks: list[int] = []
        weights: list[float] = []
        for run, w in weighted_runs:
            for e in run.entries.get(topic, ()):
                doc_ids.append(e.doc_id)
                ranks.append(e.rank)
                weights.append(w)
        if not doc_ids:
            fused[topic] = ()
            continue
        # doc index in ascending doc-id order doubles as the tie-break key
        uniq, groups = np.unique(np.asarray(doc_ids, dtype=object), return_inverse=True)
        groups = groups.astype(np.int64).ravel()
        values = np.asarray(weights, dtype=np.float64) / (k + np.asarray(ranks, dtype=np.float64))
        order = np.lexsort((values, groups))
        scores = kernels.segment_sum(np.ascontiguousarray(groups[order]), np.ascontiguousarray(values[order]), len(uniq))
        ranked = np.lexsort((np.arange(len(uniq)), -scores))
        if depth is not None:
            ranked = ranked[:depth]
        fused[topic] = tuple(RunEntry(str(uniq[i]), r, float(scores[i])) for r, i in enumerate(ranked, 1))
    return Run(tag, fused)


def rrf_fuse(runs: Sequence[Run], params: FusionParams = FusionParams(), tag: str = "RRF", depth: int | None = None) -> Run:
    """Flat reciprocal rank fusion; the topic set is the union over runs."""
    if not runs:
        raise RankFusionError("rrf_fuse needs at least one run")
    return _fuse([(r, 1.0) for r in runs], params.k, tag, depth)


def pool_fuse(pool: RunPool, params: FusionParams = FusionParams(), depth: int | None = None) -> Run:
    return rrf_fuse(pool.runs, params, tag=pool.system_name, depth=depth)


def _check_pools(pools: Sequence[RunPool]) -> None:
    if not pools:
        raise RankFusionError("need at least one pool")
    names = [p.system_name for p in pools]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"duplicate system_name: {', '.join(dupes)}")


def hierarchical_fuse(
    pools: Sequence[RunPool], params: FusionParams = FusionParams(), tag: str = "h-RRF", depth: int | None = None
) -> Run:
    """RRF within each pool, then RRF across the per-pool runs (weights ignored)."""
    _check_pools(pools)
    return _fuse([(pool_fuse(p, params), 1.0) for p in pools], params.k, tag, depth)


def weighted_hierarchical_fuse(
    pools: Sequence[RunPool], params: FusionParams = FusionParams(), tag: str = "h_w-RRF", depth: int | None = None
) -> Run:
    """Like :func:`hierarchical_fuse`, with pool ``S`` contributing ``w_S / (k + rank)``."""
    _check_pools(pools)
    for p in pools:
        if not (p.weight > 0 and math.isfinite(p.weight)):
            raise ValidationError(f"pool {p.system_name!r} has non-positive weight {p.weight}")
    return _fuse([(pool_fuse(p, params), float(p.weight)) for p in pools], params.k, tag, depth)


def default_weights(pools: Sequence[RunPool]) -> list[RunPool]:
    """Weight 2 for pools built from prior relevance judgments, 1 otherwise."""
    return [replace(p, weight=RELEVANCE_WEIGHT if p.uses_relevance_judgments else 1.0) for p in pools]


def rescore_top(
    run: Run,
    n: int,
    scorer: Callable[[int, str], float] | Mapping[int, Mapping[str, float]],
    tag: str | None = None,
) -> Run:
    """Re-rank the top ``n`` documents of every topic by ``scorer``.

    Documents below ``n`` are dropped. ``scorer`` is either a callable
    ``(topic, doc_id) -> score`` or a nested mapping ``topic -> doc_id -> score``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(scorer, Mapping):
        table = scorer

        def scorer(topic: int, doc_id: str) -> float:
            return table[topic][doc_id]

    out = {}
    for topic in sorted(run.entries):
        scored = {}
        for e in run.entries[topic][:n]:
            try:
                s = float(scorer(topic, e.doc_id))
            except KeyError:
                raise RankFusionError(f"scorer has no score for topic {topic}, doc {e.doc_id!r}") from None
            if not math.isfinite(s):
                raise RankFusionError(f"scorer returned {s} for topic {topic}, doc {e.doc_id!r}")
            scored[e.doc_id] = s
        out[topic] = scored
    return Run.from_scores(tag or run.tag, out)


def truncate(run: Run, depth: int) -> Run:
    return Run(run.tag, {t: es[:depth] for t, es in run.entries.items()})


def load_pool_config(path: str | Path) -> list[RunPool]:
    """Read a JSON list of ``{system_name, weight?, uses_relevance_judgments, run_files}``.

    ``run_files`` entries are paths or glob patterns relative to the config
    file. Omitted weights follow :func:`default_weights`.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RankFusionError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return pools_from_config(spec, path.parent, str(path))


def pools_from_config(spec: object, base: Path, where: str = "<config>") -> list[RunPool]:
    if not isinstance(spec, list):
        raise RankFusionError(f"{where}: expected a JSON list of pools")
    pools = []
    for i, item in enumerate(spec):
        ctx = f"{where}[{i}]"
        if not isinstance(item, dict):
            raise RankFusionError(f"{ctx}: expected an object")
        name = item.get("system_name")
        if not isinstance(name, str) or not name:
            raise RankFusionError(f"{ctx}: missing system_name")
        patterns = item.get("run_files")
        if not isinstance(patterns, list) or not patterns:
            raise RankFusionError(f"{ctx} ({name}): run_files must be a non-empty list")
        files: list[str] = []
        for pat in patterns:
            full = str(base / pat)
            matches = sorted(glob.glob(full)) if glob.has_magic(full) else [full]
            if not matches:
                raise RankFusionError(f"{ctx} ({name}): pattern {pat!r} matched no files")
            files.extend(matches)
        uses_rj = bool(item.get("uses_relevance_judgments", False))
        weight = item.get("weight")
        if weight is None:
            weight = RELEVANCE_WEIGHT if uses_rj else 1.0
        try:
            runs = tuple(read_run(f) for f in files)
        except (OSError, RankFusionError) as exc:
            raise RankFusionError(f"{ctx} ({name}): {exc}") from None
        pools.append(RunPool(name, runs, float(weight), uses_rj))
    _check_pools(pools)
    return pools
