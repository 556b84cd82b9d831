from __future__ import annotations

import threading

from rankfusion.text import STOPWORDS, analyze, tokenize


def test_tokenize_lowercases_and_splits_on_punctuation():
    assert tokenize("Post-infection COVID-19 immunity") == ["post", "infection", "covid", "19", "immunity"]


def test_tokenize_drops_stopwords_and_single_chars():
    assert tokenize("the T cell and a virus") == ["cell", "virus"]
    assert all(w.isalnum() for w in STOPWORDS)


def test_analyze_stems():
    assert analyze("post-infection COVID-19 immunity") == ["post", "infect", "covid", "19", "immun"]
    assert analyze("Covid covid spread") == ["covid", "covid", "spread"]


def test_analyze_is_thread_safe():
    words = "infections immunity antibodies responses mediated recovering " * 50
    expected = analyze(words)
    results = []

    def work():
        results.append(analyze(words))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == expected for r in results)
