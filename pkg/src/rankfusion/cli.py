"""Command line entry point: ``rankfusion <subcommand> ...``.

Exit codes: 0 success, 1 data or compute error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from rankfusion import __version__
from rankfusion.ablation import MODES, fuse_pools, run_ablation_config
from rankfusion.dense import HybridParams, dense_retrieve, hybrid_retrieve, load_vectors
from rankfusion.errors import RankFusionError
from rankfusion.evaluation import Cutoffs, evaluate, evaluate_residual, format_report, report_json
from rankfusion.fusion import FusionParams, load_pool_config, rescore_top, truncate
from rankfusion.lexical import BM25Params, Expansion, build_index, make_query, retrieve
from rankfusion.ltr import (
    FeatureRecord,
    examples_from_features,
    lexical_features,
    load_scorer,
    parse_features,
    score_table,
    train_linear,
    write_features,
)
from rankfusion.stats import paired_t_test
from rankfusion.storage import load_index, save_index
from rankfusion.trec import TOPIC_FIELDS, Run, load_topics, read_corpus, read_qrels, read_run, write_run

log = logging.getLogger("rankfusion")


def _fields(value: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in value.replace("+", ",").split(",") if p.strip())
    bad = [p for p in parts if p not in TOPIC_FIELDS]
    if not parts or bad:
        raise argparse.ArgumentTypeError(f"fields must be a comma list drawn from {', '.join(TOPIC_FIELDS)}")
    return parts


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        n = 0
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}")
    return n


def _expansion(value: str) -> Expansion:
    try:
        return Expansion.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _bm25(args) -> BM25Params:
    return BM25Params(args.k1, args.b)


def cmd_index(args) -> None:
    index = build_index(read_corpus(args.corpus), args.field)
    save_index(index, args.out)
    log.info("indexed %d docs, %d terms", index.n_docs, len(index.postings))


def cmd_search(args) -> None:
    if args.expand is not None and args.expand.kind == "rf" and args.qrels is None:
        raise RankFusionError("--expand rf:... requires --qrels")
    qrels = read_qrels(args.qrels) if args.qrels else None
    run = retrieve(
        load_index(args.index), load_topics(args.topics), args.fields, _bm25(args), args.depth, args.tag, args.expand, qrels
    )
    _emit(write_run(run), args.out)


def cmd_dense_search(args) -> None:
    store = load_vectors(args.vectors)
    numbers = [t.number for t in load_topics(args.topics)] if args.topics else sorted(store.topic_vectors)
    _emit(write_run(dense_retrieve(store, numbers, args.depth, args.tag)), args.out)


def cmd_hybrid_search(args) -> None:
    run = hybrid_retrieve(
        load_vectors(args.vectors),
        load_index(args.index),
        load_topics(args.topics),
        args.fields,
        HybridParams(args.lam, _bm25(args)),
        args.depth,
        args.tag,
    )
    _emit(write_run(run), args.out)


def cmd_fuse(args) -> None:
    pools = load_pool_config(args.config)
    run = fuse_pools(pools, args.mode, FusionParams(args.k), args.tag)
    if args.depth:
        run = truncate(run, args.depth)
    _emit(write_run(run), args.out)


def cmd_features(args) -> None:
    index = load_index(args.index)
    params = _bm25(args)
    topics = {t.number: t for t in load_topics(args.topics)}
    run = read_run(args.run)
    qrels = read_qrels(args.qrels) if args.qrels else None
    records = []
    for topic in run.topics:
        if topic not in topics:
            raise RankFusionError(f"run topic {topic} is not in the topics file")
        query = make_query(topics[topic], args.fields)
        for e in run.entries[topic][: args.top]:
            label = float(qrels.for_topic(topic).get(e.doc_id, 0)) if qrels else 0.0
            feats = lexical_features(index, query, index.ordinal(e.doc_id), params)
            records.append(FeatureRecord(topic, e.doc_id, feats, label))
    _emit(write_features(records), args.out)


def cmd_ltr_train(args) -> None:
    examples = examples_from_features(parse_features(Path(args.features).read_text(encoding="utf-8")))
    scorer = train_linear(examples, args.list_size, args.steps, args.lr, args.seed, args.through_sigmoid)
    _emit(scorer.to_json(), args.out)


def cmd_ltr_score(args) -> None:
    scorer = load_scorer(args.scorer)
    table = score_table(scorer, parse_features(Path(args.features).read_text(encoding="utf-8")))
    run = Run.from_scores(args.tag, table)
    if args.depth:
        run = truncate(run, args.depth)
    _emit(write_run(run), args.out)


def cmd_rescore(args) -> None:
    scorer = load_scorer(args.scorer)
    table = score_table(scorer, parse_features(Path(args.features).read_text(encoding="utf-8")))
    _emit(write_run(rescore_top(read_run(args.run), args.top, table, args.tag)), args.out)


def _evaluated(run_path: str, args):
    run, qrels = read_run(run_path), read_qrels(args.qrels)
    cutoffs = Cutoffs(args.ndcg_k, args.p_k, args.recall_k)
    if args.prior_qrels:
        return evaluate_residual(run, qrels, read_qrels(args.prior_qrels), cutoffs)
    return evaluate(run, qrels, cutoffs)


def cmd_eval(args) -> None:
    results = _evaluated(args.run, args)
    _emit(report_json(results) if args.json else format_report(results), args.out)


def cmd_ablate(args) -> None:
    _emit(run_ablation_config(args.config), args.out)


def cmd_ttest(args) -> None:
    metric_index = {"ndcg": 0, "P": 1, "map": 2, "recall": 3}[args.metric]
    a = _evaluated(args.run_a, args)[metric_index]
    b = _evaluated(args.run_b, args)[metric_index]
    report = paired_t_test(a.per_topic, b.per_topic)
    _emit(
        f"metric\t{a.metric}\nmean_a\t{a.mean:.4f}\nmean_b\t{b.mean:.4f}\nt\t{report.t_statistic:.6g}\n"
        f"p\t{report.p_value:.6g}\nn\t{report.n_pairs}\ndegenerate\t{str(report.degenerate).lower()}\n",
        args.out,
    )


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--qrels", required=True)
    p.add_argument("--prior-qrels", help="residual evaluation: drop docs judged in these qrels first")
    p.add_argument("--ndcg-k", type=_positive_int, default=20)
    p.add_argument("--p-k", type=_positive_int, default=20)
    p.add_argument("--recall-k", type=_positive_int, default=1000)


def _add_bm25_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k1", type=float, default=1.2, help="BM25 term-frequency saturation")
    p.add_argument("--b", type=float, default=0.75, help="BM25 length normalization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankfusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a BM25 index over one document field")
    p.add_argument("--corpus", required=True, help="JSON Lines corpus")
    p.add_argument("--field", required=True, choices=("abstract", "full_text"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="BM25 retrieval for every topic")
    p.add_argument("--index", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--fields", type=_fields, default=("query",), help="e.g. query,question")
    _add_bm25_flags(p)
    p.add_argument("--depth", type=_positive_int, default=1000)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--expand", type=_expansion, help="pseudo:DOCS,TERMS or rf:DOCS,TERMS (rf needs --qrels)")
    p.add_argument("--qrels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("dense-search", help="exact dot-product retrieval over a vector file")
    p.add_argument("--vectors", required=True)
    p.add_argument("--topics", help="topics XML; defaults to every topic vector")
    p.add_argument("--depth", type=_positive_int, default=1000)
    p.add_argument("--tag", default="dense")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dense_search)

    p = sub.add_parser("hybrid-search", help="lambda * dense + BM25 retrieval")
    p.add_argument("--vectors", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--fields", type=_fields, default=("query", "question", "narrative"))
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    _add_bm25_flags(p)
    p.add_argument("--depth", type=_positive_int, default=1000)
    p.add_argument("--tag", default="hybrid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_hybrid_search)

    p = sub.add_parser("fuse", help="fuse the runs of a pool config")
    p.add_argument("--config", required=True, help="JSON pool config")
    p.add_argument("--mode", choices=MODES, default="weighted")
    p.add_argument("--k", type=float, default=60.0, help="RRF constant")
    p.add_argument("--depth", type=_positive_int, help="truncate the fused run")
    p.add_argument("--tag", help="run tag (default RRF, h-RRF or h_w-RRF)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("features", help="lexical LTR features for the documents of a run")
    p.add_argument("--index", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--fields", type=_fields, default=("query", "question"))
    p.add_argument("--run", required=True)
    p.add_argument("--top", type=_positive_int, default=2000)
    p.add_argument("--qrels", help="labels from these judgments (default 0)")
    _add_bm25_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("ltr-train", help="train a linear scorer with the softmax ranking loss")
    p.add_argument("--features", required=True)
    p.add_argument("--list-size", type=int, default=12, help="candidate subset size l")
    p.add_argument("--steps", type=_positive_int, default=500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--through-sigmoid", action="store_true", help="apply the loss to sigmoid outputs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ltr_train)

    p = sub.add_parser("ltr-score", help="rank every feature record with a trained scorer")
    p.add_argument("--scorer", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--tag", default="ltr")
    p.add_argument("--depth", type=_positive_int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ltr_score)

    p = sub.add_parser("rescore", help="re-rank the top N of a run with a trained scorer")
    p.add_argument("--run", required=True)
    p.add_argument("--scorer", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--top", type=_positive_int, default=2000)
    p.add_argument("--tag")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("eval", help="nDCG@k, P@k, MAP, Recall@k")
    p.add_argument("--run", required=True)
    _add_eval_flags(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="ablation table from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("ttest", help="paired t-test of two runs on one metric")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--metric", choices=("ndcg", "P", "map", "recall"), default="map")
    _add_eval_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ttest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except (RankFusionError, ValueError, OSError, KeyError) as exc:
        print(f"rankfusion {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0
