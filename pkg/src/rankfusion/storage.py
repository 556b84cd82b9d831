"""Single-file binary persistence for :class:`~rankfusion.lexical.InvertedIndex`.

Layout (little endian), version 1::

    header   "<4sHBIdI": magic b"RFIX", version, field_source (0 abstract,
             1 full_text), n_docs, avg_doc_len, n_terms
    doc ids  n_docs varint byte lengths, then the UTF-8 bytes back to back
    doc len  n_docs varints
    terms    n_terms varint byte lengths, then UTF-8 bytes (sorted terms)
    df       n_terms varints
    gaps     sum(df) varints: per term, doc ordinals delta-encoded
             (first value is the ordinal itself)
    counts   sum(df) varints: term counts aligned with gaps

See docs/index_format.md for a worked example.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from rankfusion import kernels
from rankfusion.errors import RankFusionError
from rankfusion.lexical import FIELD_SOURCES, InvertedIndex, Postings

MAGIC = b"RFIX"
VERSION = 1
_HEADER = struct.Struct("<4sHBIdI")


def _strings_block(items: list[str]) -> bytes:
    raw = [s.encode("utf-8") for s in items]
    lengths = np.fromiter((len(r) for r in raw), dtype=np.uint64, count=len(raw))
    return kernels.encode_varints(lengths) + b"".join(raw)


def _read_strings(buf: bytes, count: int, pos: int) -> tuple[list[str], int]:
    lengths, pos = kernels.decode_varints(buf, count, pos)
    out = []
    for n in lengths.tolist():
        if pos + n > len(buf):
            raise RankFusionError("index file truncated inside a string table")
        out.append(buf[pos : pos + n].decode("utf-8"))
        pos += n
    return out, pos


def dumps_index(index: InvertedIndex) -> bytes:
    terms = sorted(index.postings)
    header = _HEADER.pack(
        MAGIC, VERSION, FIELD_SOURCES.index(index.field_source), index.n_docs, index.avg_doc_len, len(terms)
    )
    dfs = np.fromiter((len(index.postings[t].docs) for t in terms), dtype=np.uint64, count=len(terms))
    gaps, counts = [], []
    for t in terms:
        p = index.postings[t]
        docs = p.docs.astype(np.uint64)
        gaps.append(np.diff(docs, prepend=np.uint64(0)))
        counts.append(p.counts.astype(np.uint64))
    gaps_all = np.concatenate(gaps) if gaps else np.zeros(0, np.uint64)
    counts_all = np.concatenate(counts) if counts else np.zeros(0, np.uint64)
    return b"".join(
        [
            header,
            _strings_block(list(index.doc_ids)),
            kernels.encode_varints(index.doc_len.astype(np.uint64)),
            _strings_block(terms),
            kernels.encode_varints(dfs),
            kernels.encode_varints(np.ascontiguousarray(gaps_all)),
            kernels.encode_varints(np.ascontiguousarray(counts_all)),
        ]
    )


def loads_index(data: bytes) -> InvertedIndex:
    if len(data) < _HEADER.size:
        raise RankFusionError("index file too short for header")
    magic, version, field_code, n_docs, avg, n_terms = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise RankFusionError(f"not an index file (magic {magic!r})")
    if version != VERSION:
        raise RankFusionError(f"unsupported index version {version} (expected {VERSION})")
    if field_code >= len(FIELD_SOURCES):
        raise RankFusionError(f"unknown field_source code {field_code}")
    buf = bytes(data)
    if n_docs > len(buf) or n_terms > len(buf):
        raise RankFusionError("corrupt index file: counts exceed file size")
    try:
        doc_ids, pos = _read_strings(buf, n_docs, _HEADER.size)
        doc_len, pos = kernels.decode_varints(buf, n_docs, pos)
        terms, pos = _read_strings(buf, n_terms, pos)
        dfs, pos = kernels.decode_varints(buf, n_terms, pos)
        total = int(dfs.sum())
        if total > len(buf):
            raise ValueError("posting count exceeds file size")
        gaps, pos = kernels.decode_varints(buf, total, pos)
        counts, pos = kernels.decode_varints(buf, total, pos)
    except ValueError as exc:
        raise RankFusionError(f"corrupt index file: {exc}") from None
    if pos != len(data):
        raise RankFusionError(f"corrupt index file: {len(data) - pos} trailing bytes")

    doc_len = doc_len.astype(np.int64)
    if n_docs and abs(float(doc_len.sum()) / n_docs - avg) > 1e-9 * max(1.0, abs(avg)):
        raise RankFusionError("corrupt index file: stored average length disagrees with document lengths")
    postings = {}
    start = 0
    for term, df in zip(terms, dfs.tolist()):
        docs = np.cumsum(gaps[start : start + df].astype(np.int64))
        if df and docs[-1] >= n_docs:
            raise RankFusionError(f"corrupt index file: posting of {term!r} points past the last document")
        postings[term] = Postings(docs.astype(np.int32), counts[start : start + df].astype(np.int32))
        start += df
    return InvertedIndex(tuple(doc_ids), doc_len, postings, FIELD_SOURCES[field_code], avg)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    Path(path).write_bytes(dumps_index(index))


def load_index(path: str | Path) -> InvertedIndex:
    return loads_index(Path(path).read_bytes())
