from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from rankfusion import kernels
from rankfusion.cli import main
from rankfusion.storage import load_index
from rankfusion.trec import Run, read_run, save_run


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture
def indexed(synth_files, tmp_path):
    assert run_cli("index", "--corpus", synth_files["corpus"], "--field", "abstract", "--out", tmp_path / "a.idx") == 0
    return synth_files, tmp_path / "a.idx"


def test_index_command(indexed):
    _, idx = indexed
    assert load_index(idx).n_docs == 100


def test_usage_errors_exit_2(synth_files, tmp_path, capsys):
    for argv in (
        ["index", "--corpus", synth_files["corpus"], "--field", "title", "--out", tmp_path / "x"],
        ["search", "--index", "x", "--topics", "y", "--fields", "query,summary"],
        ["fuse", "--config", "x", "--mode", "borda"],
        ["nonsense"],
    ):
        with pytest.raises(SystemExit) as info:
            run_cli(*argv)
        assert info.value.code == 2


def test_data_errors_exit_1(tmp_path, capsys):
    (tmp_path / "empty.jsonl").write_text("")
    assert run_cli("index", "--corpus", tmp_path / "empty.jsonl", "--field", "abstract", "--out", tmp_path / "x") == 1
    assert "empty corpus" in capsys.readouterr().err
    assert run_cli("eval", "--run", tmp_path / "missing.run", "--qrels", tmp_path / "q") == 1


def test_search_is_deterministic(indexed, tmp_path):
    files, idx = indexed
    outs = []
    for i in range(2):
        out = tmp_path / f"s{i}.run"
        assert run_cli("search", "--index", idx, "--topics", files["topics"], "--fields", "query,question",
                       "--expand", "pseudo:10,10", "--out", out) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] and outs[0]
    run = read_run(tmp_path / "s0.run")
    assert run.tag == "bm25" and max(len(es) for es in run.entries.values()) <= 1000


def test_search_across_processes_and_backends(indexed, tmp_path):
    files, idx = indexed
    outputs = set()
    for backend in kernels.available_backends():
        env = dict(os.environ, RANKFUSION_BACKEND=backend)
        out = tmp_path / f"{backend}.run"
        subprocess.run(
            [sys.executable, "-m", "rankfusion", "search", "--index", str(idx), "--topics", str(files["topics"]),
             "--fields", "query", "--out", str(out)],
            check=True, env=env,
        )
        outputs.add(out.read_bytes())
    assert len(outputs) == 1


def test_rf_expansion_requires_qrels(indexed, tmp_path, capsys):
    files, idx = indexed
    assert run_cli("search", "--index", idx, "--topics", files["topics"], "--expand", "rf:10,300") == 1
    assert run_cli("search", "--index", idx, "--topics", files["topics"], "--expand", "rf:10,300",
                   "--qrels", files["qrels"], "--out", tmp_path / "rf.run") == 0


def test_dense_and_hybrid(indexed, tmp_path):
    files, idx = indexed
    assert run_cli("dense-search", "--vectors", files["vectors"], "--depth", "10", "--out", tmp_path / "d.run") == 0
    assert read_run(tmp_path / "d.run").topics == [1, 2, 3, 4, 5]
    assert run_cli("hybrid-search", "--vectors", files["vectors"], "--index", idx, "--topics", files["topics"],
                   "--lambda", "10", "--out", tmp_path / "h.run") == 0
    assert read_run(tmp_path / "h.run").tag == "hybrid"


def write_domination_fixture(tmp_path):
    x_files = []
    for i in range(10):
        docs = [f"a{i}", "x"] + [f"f{i}_{j}" for j in range(7)] + (["y"] if i == 0 else [])
        run = Run.from_ranked(f"x{i}", {1: [(d, float(20 - r)) for r, d in enumerate(docs)]})
        save_run(run, tmp_path / f"x{i}.run")
        x_files.append(f"x{i}.run")
    save_run(Run.from_ranked("y", {1: [("y", 1.0)]}), tmp_path / "y.run")
    cfg = [{"system_name": "X", "run_files": x_files}, {"system_name": "Y", "run_files": ["y.run"]}]
    (tmp_path / "pools.json").write_text(json.dumps(cfg))
    return tmp_path / "pools.json"


def test_fuse_flat_vs_hierarchical_domination(tmp_path):
    cfg = write_domination_fixture(tmp_path)
    tops = {}
    for mode in ("flat", "hierarchical", "weighted"):
        assert run_cli("fuse", "--config", cfg, "--mode", mode, "--out", tmp_path / f"{mode}.out") == 0
        run = read_run(tmp_path / f"{mode}.out")
        tops[mode] = (run.tag, run.docs(1)[0])
    assert tops == {"flat": ("RRF", "x"), "hierarchical": ("h-RRF", "y"), "weighted": ("h_w-RRF", "y")}


def test_fuse_single_run_keeps_order(tmp_path):
    run = Run.from_ranked("only", {1: [("c", 3.0), ("a", 2.0), ("b", 1.0)], 2: [("z", 1.0)]})
    save_run(run, tmp_path / "only.run")
    (tmp_path / "p.json").write_text(json.dumps([{"system_name": "S", "run_files": ["only.run"]}]))
    for mode in ("flat", "hierarchical", "weighted"):
        assert run_cli("fuse", "--config", tmp_path / "p.json", "--mode", mode, "--out", tmp_path / "o.run") == 0
        fused = read_run(tmp_path / "o.run")
        assert {t: fused.docs(t) for t in fused.topics} == {1: ["c", "a", "b"], 2: ["z"]}


def test_eval_golden_and_json(data_dir, tmp_path):
    out = tmp_path / "report.tsv"
    assert run_cli("eval", "--run", data_dir / "eval_run.txt", "--qrels", data_dir / "eval_qrels.txt",
                   "--ndcg-k", "3", "--p-k", "2", "--recall-k", "3", "--out", out) == 0
    assert out.read_text() == (data_dir / "eval_report_golden.tsv").read_text()
    assert run_cli("eval", "--run", data_dir / "eval_run.txt", "--qrels", data_dir / "eval_qrels.txt",
                   "--json", "--out", tmp_path / "r.json") == 0
    assert "ndcg_cut_20" in json.loads((tmp_path / "r.json").read_text())


def test_eval_residual_with_same_qrels_fails(data_dir, capsys):
    q = data_dir / "eval_qrels.txt"
    assert run_cli("eval", "--run", data_dir / "eval_run.txt", "--qrels", q, "--prior-qrels", q) == 1
    assert "no evaluable topics" in capsys.readouterr().err


def test_ablate_golden(data_dir, tmp_path):
    out = tmp_path / "table.tsv"
    assert run_cli("ablate", "--config", data_dir / "ablation" / "ablation.json", "--out", out) == 0
    assert out.read_text() == (data_dir / "ablation" / "golden.tsv").read_text()


def test_ttest_command(data_dir, tmp_path):
    abl = data_dir / "ablation"
    out = tmp_path / "t.tsv"
    assert run_cli("ttest", abl / "terrier0.run", abl / "relfb.run", "--qrels", abl / "qrels.txt",
                   "--metric", "map", "--out", out) == 0
    fields = dict(line.split("\t") for line in out.read_text().splitlines())
    assert fields["metric"] == "map" and fields["n"] == "8" and float(fields["p"]) < 0.05
