"""Ablation tables: fuse subsets of system pools, evaluate each, and mark rows
that differ significantly from a baseline row (paired t-test per metric)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from rankfusion.errors import RankFusionError
from rankfusion.evaluation import Cutoffs, EvalResult, evaluate, evaluate_residual
from rankfusion.fusion import (
    FusionParams,
    RunPool,
    hierarchical_fuse,
    pools_from_config,
    rrf_fuse,
    weighted_hierarchical_fuse,
)
from rankfusion.stats import paired_t_test
from rankfusion.trec import Qrels, Run, read_qrels

MODES = ("flat", "hierarchical", "weighted")
_PREFIX = {"flat": "RRF", "hierarchical": "h-RRF", "weighted": "h_w-RRF"}


@dataclass(frozen=True)
class AblationRow:
    systems: tuple[str, ...]
    mode: str = "flat"
    name: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise RankFusionError(f"unknown fusion mode {self.mode!r}; expected one of {MODES}")
        if not self.systems:
            raise RankFusionError("ablation row needs at least one system")
        if not self.name:
            sep = "" if all(len(s) == 1 for s in self.systems) else "+"
            object.__setattr__(self, "name", f"{_PREFIX[self.mode]}({sep.join(self.systems)})")


def fuse_pools(pools: Sequence[RunPool], mode: str, params: FusionParams = FusionParams(), tag: str | None = None) -> Run:
    if mode == "flat":
        return rrf_fuse([r for p in pools for r in p.runs], params, tag or _PREFIX[mode])
    if mode == "hierarchical":
        return hierarchical_fuse(pools, params, tag or _PREFIX[mode])
    if mode == "weighted":
        return weighted_hierarchical_fuse(pools, params, tag or _PREFIX[mode])
    raise RankFusionError(f"unknown fusion mode {mode!r}")


def run_ablation(
    pools: Sequence[RunPool],
    rows: Sequence[AblationRow],
    qrels: Qrels,
    prior_qrels: Qrels | None = None,
    params: FusionParams = FusionParams(),
    cutoffs: Cutoffs = Cutoffs(),
    baseline: str | None = None,
    alpha: float = 0.05,
) -> str:
    """Render the ablation table as TSV; metric values are percentages and a
    trailing ``*`` marks p < ``alpha`` against the baseline row."""
    if not rows:
        raise RankFusionError("ablation needs at least one row")
    by_name = {p.system_name: p for p in pools}
    names = [r.name for r in rows]
    if len(set(names)) != len(names):
        raise RankFusionError("ablation row names must be unique")
    baseline = baseline or names[-1]
    if baseline not in names:
        raise RankFusionError(f"baseline row {baseline!r} is not among the rows")

    evaluated: dict[str, tuple[int, list[EvalResult]]] = {}
    for row in rows:
        missing = [s for s in row.systems if s not in by_name]
        if missing:
            raise RankFusionError(f"row {row.name!r}: unknown systems {missing}")
        selected = [by_name[s] for s in row.systems]
        run = fuse_pools(selected, row.mode, params)
        n_fused = sum(len(p.runs) for p in selected) if row.mode == "flat" else len(selected)
        if prior_qrels is None:
            evaluated[row.name] = (n_fused, evaluate(run, qrels, cutoffs))
        else:
            evaluated[row.name] = (n_fused, evaluate_residual(run, qrels, prior_qrels, cutoffs))

    base = evaluated[baseline][1]
    lines = ["system\truns\t" + "\t".join(cutoffs.metric_names()) + "\n"]
    for row in rows:
        n_fused, results = evaluated[row.name]
        cells = []
        for res, ref in zip(results, base):
            mark = ""
            if row.name != baseline:
                common = sorted(set(res.per_topic) & set(ref.per_topic))
                if len(common) >= 2:
                    test = paired_t_test({t: res.per_topic[t] for t in common}, {t: ref.per_topic[t] for t in common})
                    mark = "*" if test.significant(alpha) else ""
            cells.append(f"{100 * res.mean:.2f}{mark}")
        lines.append(f"{row.name}\t{n_fused}\t" + "\t".join(cells) + "\n")
    return "".join(lines)


def run_ablation_config(path: str | Path) -> str:
    """Run an ablation described by a JSON file (paths relative to the file).

    Keys: ``pools`` (inline list or path to a pool config), ``qrels``,
    optional ``prior_qrels``, ``k``, ``cutoffs`` {ndcg, precision, recall},
    ``rows`` [{systems, mode, name?}] and ``baseline`` (row name, default last).
    """
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RankFusionError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise RankFusionError(f"{path}: expected a JSON object")
    base = path.parent
    pools_spec = cfg.get("pools")
    if isinstance(pools_spec, str):
        pools_path = base / pools_spec
        try:
            pools_json = json.loads(pools_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RankFusionError(f"{pools_path}: invalid JSON: {exc.msg}") from None
        pools = pools_from_config(pools_json, pools_path.parent, str(pools_path))
    else:
        pools = pools_from_config(pools_spec, base, f"{path}:pools")
    if "qrels" not in cfg:
        raise RankFusionError(f"{path}: missing 'qrels'")
    try:
        rows = [AblationRow(tuple(r["systems"]), r.get("mode", "flat"), r.get("name", "")) for r in cfg.get("rows", [])]
    except (KeyError, TypeError):
        raise RankFusionError(f"{path}: every row needs a 'systems' list") from None
    prior = read_qrels(base / cfg["prior_qrels"]) if cfg.get("prior_qrels") else None
    return run_ablation(
        pools,
        rows,
        read_qrels(base / cfg["qrels"]),
        prior,
        FusionParams(float(cfg.get("k", 60.0))),
        Cutoffs(**cfg.get("cutoffs", {})),
        cfg.get("baseline"),
    )
