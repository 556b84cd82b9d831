"""Pure numpy/Python versions of the compiled kernels.

Floating point operations are issued in the same order as in ``_ckernels.pyx``
so both backends produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def bm25_accumulate(
    acc: np.ndarray,
    docs: np.ndarray,
    counts: np.ndarray,
    doc_len: np.ndarray,
    avg_len: float,
    idf: float,
    qweight: float,
    k: float,
    b: float,
) -> None:
    if docs.size == 0:
        return
    cnt = counts.astype(np.float64)
    norm = 1.0 + b * (doc_len[docs].astype(np.float64) / avg_len - 1.0)
    w = idf * (cnt * (k + 1.0) / (cnt + k * norm))
    # doc ordinals are unique within one posting list
    acc[docs] += qweight * w


def segment_sum(groups: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.zeros(n_groups, dtype=np.float64)
    # unbuffered and applied in element order, like the C loop
    np.add.at(out, groups, values)
    return out


def dense_dot(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    out = np.zeros(matrix.shape[0], dtype=np.float64)
    for j in range(matrix.shape[1]):
        out += matrix[:, j] * query[j]
    return out


def encode_varints(values: np.ndarray) -> bytes:
    out = bytearray()
    for v in values.tolist():
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return bytes(out)


def decode_varints(buf: bytes, count: int, offset: int = 0) -> tuple[np.ndarray, int]:
    out = np.empty(count, dtype=np.uint64)
    pos = offset
    size = len(buf)
    for i in range(count):
        v = 0
        shift = 0
        while True:
            if pos >= size:
                raise ValueError("truncated varint stream")
            byte = buf[pos]
            pos += 1
            v |= (byte & 0x7F) << shift
            if byte < 0x80:
                break
            shift += 7
            if shift > 63:
                raise ValueError("varint overflow")
        out[i] = v
    return out, pos
