from __future__ import annotations

import json

import pytest

from oracles import ap_oracle, rrf_oracle
from rankfusion.ablation import AblationRow, fuse_pools, run_ablation, run_ablation_config
from rankfusion.errors import RankFusionError
from rankfusion.fusion import load_pool_config
from rankfusion.trec import read_qrels, read_run


@pytest.fixture
def ablation_dir(data_dir):
    return data_dir / "ablation"


def test_golden_table(ablation_dir):
    assert run_ablation_config(ablation_dir / "ablation.json") == (ablation_dir / "golden.tsv").read_text()


def test_flat_row_matches_oracle(ablation_dir):
    qrels = read_qrels(ablation_dir / "qrels.txt")
    lists = [{t: read_run(p).docs(t) for t in read_run(p).topics} for p in sorted(ablation_dir.glob("terrier*.run"))]
    fused = rrf_oracle(lists)
    aps = []
    for t, ranked in fused.items():
        judged = qrels.for_topic(t)
        n_rel = sum(1 for g in judged.values() if g >= 1)
        aps.append(ap_oracle([judged.get(d, 0) >= 1 for d, _ in ranked], n_rel))
    row = (ablation_dir / "golden.tsv").read_text().splitlines()[1].split("\t")
    assert row[0] == "RRF(T)" and row[1] == "3"
    assert row[4].rstrip("*") == f"{100 * sum(aps) / len(aps):.2f}"


def test_structure_and_baseline_without_stars(ablation_dir):
    pools = load_pool_config(ablation_dir / "pools.json")
    qrels = read_qrels(ablation_dir / "qrels.txt")
    rows = [AblationRow(("T",)), AblationRow(("A",)), AblationRow(("T", "A"))]
    lines = run_ablation(pools, rows, qrels).splitlines()
    assert len(lines) == 4
    counts = [int(line.split("\t")[1]) for line in lines[1:]]
    assert counts == [3, 2, 5]
    assert "*" not in lines[-1]
    only = run_ablation(pools, [AblationRow(("T",))], qrels).splitlines()
    assert "*" not in only[1]


def test_row_names_and_errors(ablation_dir):
    assert AblationRow(("T", "A"), "weighted").name == "h_w-RRF(TA)"
    assert AblationRow(("Terrier", "Anserini")).name == "RRF(Terrier+Anserini)"
    with pytest.raises(RankFusionError):
        AblationRow(("T",), "borda")
    pools = load_pool_config(ablation_dir / "pools.json")
    qrels = read_qrels(ablation_dir / "qrels.txt")
    with pytest.raises(RankFusionError, match="unknown systems"):
        run_ablation(pools, [AblationRow(("Z",))], qrels)
    with pytest.raises(RankFusionError, match="baseline"):
        run_ablation(pools, [AblationRow(("T",))], qrels, baseline="nope")


def test_inline_pools_and_residual(ablation_dir, tmp_path):
    cfg = json.loads((ablation_dir / "ablation.json").read_text())
    cfg["pools"] = [
        {"system_name": "T", "run_files": [str(p) for p in sorted(ablation_dir.glob("terrier*.run"))]},
    ]
    cfg["qrels"] = str(ablation_dir / "qrels.txt")
    cfg["prior_qrels"] = str(ablation_dir / "qrels.txt")
    cfg["rows"] = [{"systems": ["T"]}]
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    with pytest.raises(RankFusionError, match="no evaluable topics"):
        run_ablation_config(tmp_path / "cfg.json")


def test_fuse_pools_one_run_keeps_order(ablation_dir):
    pools = load_pool_config(ablation_dir / "pools.json")
    relfb = [p for p in pools if p.system_name == "R"]
    for mode in ("flat", "hierarchical", "weighted"):
        fused = fuse_pools(relfb, mode)
        assert {t: fused.docs(t) for t in fused.topics} == {t: relfb[0].runs[0].docs(t) for t in fused.topics}
