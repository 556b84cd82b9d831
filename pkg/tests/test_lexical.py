from __future__ import annotations

import math
import random

import numpy as np
import pytest

from oracles import bm25_materialized
from rankfusion.errors import RankFusionError, ValidationError
from rankfusion.lexical import (
    BM25Params,
    Expansion,
    QuerySpec,
    bm25_score,
    bm25_term_weight,
    build_index,
    make_query,
    pseudo_feedback_expand,
    relevance_feedback_expand,
    retrieve,
    score_all,
    search,
    term_informativeness,
)
from rankfusion.text import analyze
from rankfusion.trec import Doc, Topic, load_topics, parse_qrels


def corpus(*abstracts: str) -> list[Doc]:
    return [Doc(f"d{i}", "", a, "") for i, a in enumerate(abstracts)]


def random_corpus(rng: random.Random, n_docs: int, vocab_size: int) -> tuple[list[Doc], list[str]]:
    vocab = [f"w{i}x" for i in range(vocab_size)]
    docs = [Doc(f"d{i:03d}", "", " ".join(rng.choices(vocab, k=rng.randint(0, 40))), "filler") for i in range(n_docs)]
    return docs, vocab


def test_build_index_single_doc():
    idx = build_index(corpus("Covid covid spread"))
    assert idx.doc_len.tolist() == [3]
    assert idx.postings["covid"].docs.tolist() == [0] and idx.postings["covid"].counts.tolist() == [2]
    assert idx.postings["spread"].counts.tolist() == [1]


def test_build_index_empty_field_and_average():
    docs = [Doc("a", "", "", "text only here"), Doc("b", "", "covid spread", "")]
    idx = build_index(docs, "abstract")
    assert idx.doc_len.tolist() == [0, 2]
    assert idx.avg_doc_len == 1.0
    assert all(0 not in p.docs.tolist() for p in idx.postings.values())
    assert idx.doc_freq == {t: len(p.docs) for t, p in idx.postings.items()}


def test_build_index_errors():
    with pytest.raises(RankFusionError):
        build_index([])
    with pytest.raises(ValueError):
        build_index(corpus("x"), "title")


def test_term_weight_absent_is_zero_and_unit_case_is_idf():
    idx = build_index(corpus("covid spread", "covid cell", "cell death"))
    assert bm25_term_weight("death", 0, idx) == 0.0
    # doc 0 has length 2 == average, count 1
    for k, b in [(1.2, 0.75), (0.5, 0.0), (3.0, 1.0)]:
        assert bm25_term_weight("spread", 0, idx, BM25Params(k, b)) == idx.idf("spread")


def test_term_weight_matches_formula_transcription():
    rng = random.Random(3)
    docs, vocab = random_corpus(rng, 15, 30)
    idx = build_index(docs)
    n, avg = idx.n_docs, idx.avg_doc_len
    for _ in range(200):
        term, d = rng.choice(vocab), rng.randrange(n)
        cnt = idx.count(term, d)
        if cnt == 0:
            continue
        df = idx.doc_freq[term]
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        m = idx.doc_len[d]
        expect = idf * cnt * 2.2 / (cnt + 1.2 * (0.25 + 0.75 * m / avg))
        assert bm25_term_weight(term, d, idx) == pytest.approx(expect, rel=1e-12)


def test_bm25_score_empty_and_single_term():
    idx = build_index(corpus("covid spread", "covid cell"))
    assert bm25_score(QuerySpec(()), 0, idx) == 0.0
    assert bm25_score(QuerySpec(("spread",)), 0, idx) == bm25_term_weight("spread", 0, idx)


def test_bm25_score_equals_materialized_dot_product():
    docs = corpus("covid spread fast", "covid cell cell", "cell death", "spread of covid in cell", "unrelated words")
    idx = build_index(docs)
    q = QuerySpec(tuple(analyze("covid cell spread")))
    oracle = bm25_materialized([analyze(d.abstract) for d in docs], list(q.terms))
    for d in range(5):
        assert bm25_score(q, d, idx) == pytest.approx(oracle[d], abs=1e-12)


def test_score_all_matches_per_doc_score_bitwise(backend):
    rng = random.Random(11)
    docs, vocab = random_corpus(rng, 40, 60)
    idx = build_index(docs)
    q = QuerySpec(tuple(rng.choices(vocab, k=6)), {})
    all_scores = score_all(idx, q)
    assert [float(s) for s in all_scores] == [bm25_score(q, d, idx) for d in range(idx.n_docs)]


def test_search_basics():
    idx = build_index(corpus("covid spread", "covid cell", "unique marker covid", "covid"))
    assert search(idx, QuerySpec(("marker",)))[0][0] == "d2"
    q = QuerySpec(("covid", "cell"))
    assert search(idx, q, depth=1) == search(idx, q, depth=10)[:1]
    assert search(idx, QuerySpec(("nothing",))) == []


def test_search_matches_exhaustive_sort():
    rng = random.Random(5)
    docs, vocab = random_corpus(rng, 60, 40)
    idx = build_index(docs)
    for _ in range(10):
        q = QuerySpec(tuple(rng.choices(vocab, k=rng.randint(1, 5))))
        scored = [(d.doc_id, bm25_score(q, i, idx)) for i, d in enumerate(docs)]
        expect = sorted((ds for ds in scored if ds[1] > 0), key=lambda ds: (-ds[1], ds[0]))
        assert search(idx, q, depth=1000) == expect


def test_make_query(data_dir):
    topic = load_topics(data_dir / "topic49.xml")[0]
    assert make_query(topic, {"query"}).terms == tuple(analyze("post-infection COVID-19 immunity"))
    both = make_query(topic, {"query", "question"}).terms
    assert sorted(both) == sorted(analyze(topic.query) + analyze(topic.question))
    dup = make_query(Topic(1, "covid", "covid spread"), ["query", "question"])
    assert dup.terms.count("covid") == 2 and dup.vector()["covid"] == 2.0
    with pytest.raises(ValueError):
        make_query(topic, {"title"})


def test_query_spec_validation():
    with pytest.raises(ValidationError):
        QuerySpec(("a",), {"b": 1.0})
    with pytest.raises(ValidationError):
        QuerySpec(("a",), {"a": 0.0})


def kl_oracle(docs_tokens, feedback, query_terms, n_terms):
    coll = {}
    for toks in docs_tokens:
        for t in toks:
            coll[t] = coll.get(t, 0) + 1
    total = sum(coll.values())
    fb = {}
    for d in feedback:
        for t in docs_tokens[d]:
            fb[t] = fb.get(t, 0) + 1
    fb_len = sum(fb.values())
    scored = []
    for t, c in fb.items():
        if t in query_terms:
            continue
        s = (c / fb_len) * math.log((c / fb_len) / (coll[t] / total))
        if s > 0:
            scored.append((-s, t))
    return [t for _, t in sorted(scored)[:n_terms]]


def test_pseudo_feedback_matches_exhaustive_oracle():
    docs = corpus("covid spread aerosol droplet", "covid mask aerosol", "cell biology membrane protein protein")
    idx = build_index(docs)
    q = QuerySpec(("covid",))
    expanded = pseudo_feedback_expand(idx, q, n_docs=2, n_terms=3)
    top = [idx.ordinal(d) for d, _ in search(idx, q, depth=2)]
    expect = kl_oracle([analyze(d.abstract) for d in docs], top, {"covid"}, 3)
    assert list(expanded.terms[1:]) == expect
    assert expanded.terms[0] == "covid"
    weights = [expanded.weight(t) for t in expect]
    assert weights[0] == 1.0 and all(0 < w <= 1 for w in weights)
    assert weights == sorted(weights, reverse=True)


def test_pseudo_feedback_saturation_and_no_new_terms():
    idx = build_index(corpus("covid spread", "covid", "cell death membrane"))
    expanded = pseudo_feedback_expand(idx, QuerySpec(("covid",)), n_docs=2, n_terms=100)
    assert set(expanded.terms) == {"covid", "spread"}
    idx = build_index(corpus("covid covid", "cell"))
    assert pseudo_feedback_expand(idx, QuerySpec(("covid",)), n_docs=1).terms == ("covid",)


def test_term_informativeness_positive_for_overrepresented_terms():
    idx = build_index(corpus("covid spread", "cell cell cell cell"))
    scores = term_informativeness({"covid": 1, "spread": 1}, 2, idx)
    assert scores["covid"] == pytest.approx(0.5 * math.log(0.5 / (1 / 6)))


def test_relevance_feedback():
    docs = corpus("covid spread aerosol", "covid mask", "covid cell protein")
    idx = build_index(docs)
    q = QuerySpec(("covid",))
    assert relevance_feedback_expand(idx, q, BM25Params(), parse_qrels(""), 1) == q
    one = relevance_feedback_expand(idx, q, BM25Params(), parse_qrels("1 0 d2 1\n1 0 d0 0\n"), 1)
    assert one.feedback_docs == ("d2",)
    assert set(one.terms[1:]) <= {"cell", "protein"}
    for n_docs, n_terms in [(10, 300), (30, 1000)]:
        relevance_feedback_expand(idx, q, BM25Params(), parse_qrels("1 0 d1 2\n"), 1, n_docs, n_terms)


def test_expansion_parse():
    assert Expansion.parse("pseudo:10,10") == Expansion("pseudo", 10, 10)
    assert Expansion.parse("rf:10,300") == Expansion("rf", 10, 300)
    for bad in ("pseudo", "rocchio:1,2", "rf:0,3", "rf:1"):
        with pytest.raises(ValueError):
            Expansion.parse(bad)


def test_retrieve_builds_run():
    idx = build_index(corpus("covid spread", "covid cell", "cell"))
    topics = [Topic(1, "covid"), Topic(2, "cell")]
    run = retrieve(idx, topics, ["query"], tag="t")
    assert run.topics == [1, 2] and run.tag == "t"
    assert run.docs(1) == ["d0", "d1"] or run.docs(1) == ["d1", "d0"]
    with pytest.raises(ValueError):
        retrieve(idx, topics, ["query"], expansion=Expansion("rf", 1, 1))


def test_bm25_params_validation():
    with pytest.raises(ValueError):
        BM25Params(-1.0, 0.5)
    with pytest.raises(ValueError):
        BM25Params(1.2, 1.5)


def test_doc_id_rank_orders_ties():
    idx = build_index([Doc("b", "", "covid", ""), Doc("a", "", "covid", "")])
    assert [d for d, _ in search(idx, QuerySpec(("covid",)))] == ["a", "b"]
    assert np.all(np.diff(idx.doc_id_rank[[1, 0]]) > 0)
