"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints one row per kernel with the best-of-N wall time for each backend and
the speedup. Also checks that both backends return identical bytes.
"""

from __future__ import annotations

import argparse
import time
from typing import Callable

import numpy as np

from rankfusion import _pykernels, kernels


def _cases(scale: float, rng: np.random.Generator) -> dict[str, Callable]:
    n_docs = int(200_000 * scale)
    postings = np.sort(rng.choice(n_docs, size=n_docs // 4, replace=False)).astype(np.int32)
    counts = rng.integers(1, 20, len(postings)).astype(np.int32)
    doc_len = rng.integers(1, 400, n_docs).astype(np.int64)

    n_vals = int(500_000 * scale)
    groups = np.sort(rng.integers(0, n_vals // 10, n_vals)).astype(np.int64)
    values = rng.random(n_vals)

    matrix = np.ascontiguousarray(rng.normal(size=(int(20_000 * scale), 128)))
    query = rng.normal(size=128)

    ints = rng.integers(0, 2**40, int(300_000 * scale), dtype=np.uint64)
    blob = _pykernels.encode_varints(ints)
    return {
        "bm25_accumulate": lambda mod: _bm25(mod, postings, counts, doc_len),
        "segment_sum": lambda mod: mod.segment_sum(groups, values, n_vals // 10),
        "dense_dot": lambda mod: mod.dense_dot(matrix, query),
        "encode_varints": lambda mod: mod.encode_varints(ints),
        "decode_varints": lambda mod: mod.decode_varints(blob, len(ints), 0)[0],
    }


def _bm25(mod, postings, counts, doc_len):
    acc = np.zeros(len(doc_len))
    mod.bm25_accumulate(acc, postings, counts, doc_len, float(doc_len.mean()), 2.3, 1.0, 1.2, 0.75)
    return acc


def _best(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def _as_bytes(x) -> bytes:
    return x if isinstance(x, bytes) else np.asarray(x).tobytes()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0, help="multiply input sizes")
    args = parser.parse_args()

    if "cython" not in kernels.available_backends():
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    from rankfusion import _ckernels

    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'cython (ms)':>14}{'python (ms)':>14}{'speedup':>10}  identical")
    for name, fn in _cases(args.scale, rng).items():
        t_c, out_c = _best(lambda: fn(_ckernels), args.repeat)
        t_p, out_p = _best(lambda: fn(_pykernels), args.repeat)
        same = _as_bytes(out_c) == _as_bytes(out_p)
        print(f"{name:<18}{t_c * 1e3:>14.2f}{t_p * 1e3:>14.2f}{t_p / t_c:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
