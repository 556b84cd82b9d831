# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Every routine mirrors ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def bm25_accumulate(double[::1] acc, const int[::1] docs, const int[::1] counts,
                    const long long[::1] doc_len, double avg_len, double idf,
                    double qweight, double k, double b):
    cdef Py_ssize_t i, n = docs.shape[0]
    cdef int d
    cdef double cnt, norm, w
    for i in range(n):
        d = docs[i]
        cnt = <double>counts[i]
        norm = 1.0 + b * (<double>doc_len[d] / avg_len - 1.0)
        w = idf * (cnt * (k + 1.0) / (cnt + k * norm))
        acc[d] += qweight * w


def segment_sum(const long long[::1] groups, const double[::1] values, Py_ssize_t n_groups):
    out = np.zeros(n_groups, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = groups.shape[0]
    for i in range(n):
        o[groups[i]] += values[i]
    return out


def dense_dot(const double[:, ::1] matrix, const double[::1] query):
    cdef Py_ssize_t n = matrix.shape[0], dim = matrix.shape[1], i, j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(dim):
            s += matrix[i, j] * query[j]
        o[i] = s
    return out


def encode_varints(const unsigned long long[::1] values):
    cdef Py_ssize_t n = values.shape[0], i, pos = 0
    buf = bytearray(10 * n)
    cdef unsigned char[::1] out = buf
    cdef unsigned long long v
    for i in range(n):
        v = values[i]
        while v >= 0x80:
            out[pos] = <unsigned char>((v & 0x7F) | 0x80)
            v >>= 7
            pos += 1
        out[pos] = <unsigned char>v
        pos += 1
    return bytes(buf[:pos])


def decode_varints(const unsigned char[::1] buf, Py_ssize_t count, Py_ssize_t offset=0):
    out = np.empty(count, dtype=np.uint64)
    cdef unsigned long long[::1] o = out
    cdef Py_ssize_t i, pos = offset, size = buf.shape[0]
    cdef unsigned long long v
    cdef unsigned char byte
    cdef int shift
    for i in range(count):
        v = 0
        shift = 0
        while True:
            if pos >= size:
                raise ValueError("truncated varint stream")
            byte = buf[pos]
            pos += 1
            v |= (<unsigned long long>(byte & 0x7F)) << shift
            if byte < 0x80:
                break
            shift += 7
            if shift > 63:
                raise ValueError("varint overflow")
        o[i] = v
    return out, pos
