"""The single analysis pipeline shared by indexing and query construction.

lowercase -> split on non-alphanumerics -> drop tokens shorter than 2
-> drop stopwords -> Porter stem.
"""

from __future__ import annotations

import re
import threading

import snowballstemmer

_WORD = re.compile(r"[^\W_]+")

# fixed list; changing it changes every BM25 number downstream
STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because been before being below
    between both but by can could did do does doing down during each few for from further had has have
    having he her here hers herself him himself his how if in into is it its itself just me more most my
    myself no nor not now of off on once only or other our ours ourselves out over own same she should
    so some such than that the their theirs them themselves then there these they this those through to
    too under until up very was we were what when where which while who whom why will with would you your
    yours yourself yourselves also may might must shall
    """.split()
)

# snowball stemmers keep per-call state; one per thread
_local = threading.local()


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens of length >= 2, stopwords removed, unstemmed."""
    return [t for t in _WORD.findall(text.lower()) if len(t) >= 2 and t not in STOPWORDS]


def analyze(text: str) -> list[str]:
    stemmer = getattr(_local, "stemmer", None)
    if stemmer is None:
        stemmer = _local.stemmer = snowballstemmer.stemmer("porter")
    return stemmer.stemWords(tokenize(text))
